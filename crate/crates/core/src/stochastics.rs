//! Process noise, saturation functions and dropout channels.
//!
//! Every random quantity is drawn from a keyed ChaCha stream identified by
//! `(seed, index, source)`, so sample paths and Monte Carlo chunks can be
//! replayed independently of thread scheduling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;

/// Which consumer a random stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamSource {
    PlantNoise = 1,
    Channel = 2,
    MomentChannel = 3,
    MomentNoise = 4,
}

/// Independent reproducible substream for `(seed, index, source)`.
pub fn substream(seed: u64, index: u64, source: StreamSource) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(8).wrapping_add(source as u64));
    rng
}

/// Zero-mean i.i.d. Gaussian process noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub covariance: DMatrix<f64>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(covariance: DMatrix<f64>, seed: u64) -> Result<Self> {
        linalg::check_psd(&covariance, "noise covariance", 1e-10)?;
        Ok(Self { covariance, seed })
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn is_zero(&self) -> bool {
        self.covariance.iter().all(|&v| v == 0.0)
    }
}

/// Draws `N(0, Σ_w)` vectors through a fixed square-root factor.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    factor: DMatrix<f64>,
    zero: bool,
}

impl NoiseSampler {
    pub fn new(spec: &NoiseSpec) -> Self {
        Self {
            factor: linalg::psd_factor(&spec.covariance),
            zero: spec.is_zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.draw_into(rng, out.as_mut_slice());
        out
    }

    /// Writes one draw into `out` (length `d`).
    pub fn draw_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        let mut z = [0.0f64; 16];
        let mut heap;
        let z: &mut [f64] = if d <= 16 {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for (i, o) in out.iter_mut().enumerate().take(d) {
            *o = if self.zero {
                0.0
            } else {
                (0..d).map(|j| self.factor[(i, j)] * z[j]).sum()
            };
        }
    }
}

/// Stacked draw `w_{t:horizon}` of length `d * horizon`.
pub fn sample_noise<R: Rng>(spec: &NoiseSpec, horizon: usize, rng: &mut R) -> DVector<f64> {
    let sampler = NoiseSampler::new(spec);
    let d = sampler.dim();
    let mut out = DVector::zeros(d * horizon);
    for k in 0..horizon {
        sampler.draw_into(rng, &mut out.as_mut_slice()[k * d..(k + 1) * d]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaturationKind {
    /// `phi_max * (1 - e^{-x}) / (1 + e^{-x})`
    Sigmoid,
    HardSat,
    PiecewiseLinear,
}

/// Component-wise odd saturation bounded by `phi_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationSpec {
    pub kind: SaturationKind,
    pub phi_max: f64,
}

impl Default for SaturationSpec {
    fn default() -> Self {
        Self {
            kind: SaturationKind::Sigmoid,
            phi_max: 1.0,
        }
    }
}

impl SaturationSpec {
    pub fn new(kind: SaturationKind, phi_max: f64) -> Result<Self> {
        if !(phi_max > 0.0) || !phi_max.is_finite() {
            return Err(Error::InvalidArgument(format!("phi_max must be positive, got {phi_max}")));
        }
        Ok(Self { kind, phi_max })
    }

    #[inline]
    pub fn apply_scalar(&self, x: f64) -> f64 {
        let mag = match self.kind {
            // (1 - e^{-x}) / (1 + e^{-x}) = tanh(x / 2)
            SaturationKind::Sigmoid => self.phi_max * (0.5 * x.abs()).tanh(),
            SaturationKind::HardSat | SaturationKind::PiecewiseLinear => x.abs().min(self.phi_max),
        };
        // sign handled separately so the map is exactly odd
        if x < 0.0 {
            -mag
        } else {
            mag
        }
    }

    pub fn apply_in_place(&self, w: &mut [f64]) {
        for v in w {
            *v = self.apply_scalar(*v);
        }
    }
}

/// Stacked `e(w)` of the same length as `w`.
pub fn saturate(spec: &SaturationSpec, w: &DVector<f64>) -> DVector<f64> {
    w.map(|x| spec.apply_scalar(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeStart {
    Stationary,
    Good,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelKind {
    BernoulliIid {
        p: f64,
    },
    /// Two-state Markov channel. State 1 ("good") delivers with
    /// probability `p1`, state 2 ("bad") with `p2`.
    GilbertElliott {
        p1: f64,
        p2: f64,
        p12: f64,
        p21: f64,
        start: GeStart,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub seed: u64,
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidArgument(format!("{name} = {v} is not a probability")));
    }
    Ok(())
}

impl ChannelSpec {
    pub fn bernoulli(p: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            kind: ChannelKind::BernoulliIid { p },
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ChannelKind::BernoulliIid { p } => {
                check_prob("p", p)?;
                if p == 0.0 {
                    return Err(Error::InvalidArgument(
                        "success probability must be nonzero".into(),
                    ));
                }
            }
            ChannelKind::GilbertElliott { p1, p2, p12, p21, .. } => {
                check_prob("p1", p1)?;
                check_prob("p2", p2)?;
                check_prob("p12", p12)?;
                check_prob("p21", p21)?;
                if p12 + p21 == 0.0 {
                    return Err(Error::InvalidArgument(
                        "Gilbert-Elliott chain needs p12 + p21 > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Long-run probability of a successful transmission.
    pub fn stationary_success(&self) -> f64 {
        match self.kind {
            ChannelKind::BernoulliIid { p } => p,
            ChannelKind::GilbertElliott { p1, p2, p12, p21, .. } => {
                let good = p21 / (p12 + p21);
                good * p1 + (1.0 - good) * p2
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeState {
    Good,
    Bad,
}

/// Stateful dropout generator; one per sample path.
#[derive(Debug, Clone)]
pub struct DropoutSampler {
    kind: ChannelKind,
    state: GeState,
}

impl DropoutSampler {
    pub fn new<R: Rng>(spec: &ChannelSpec, rng: &mut R) -> Self {
        let state = match spec.kind {
            ChannelKind::GilbertElliott { p12, p21, start, .. } => match start {
                GeStart::Good => GeState::Good,
                GeStart::Stationary => {
                    if rng.random::<f64>() < p21 / (p12 + p21) {
                        GeState::Good
                    } else {
                        GeState::Bad
                    }
                }
            },
            ChannelKind::BernoulliIid { .. } => GeState::Good,
        };
        Self {
            kind: spec.kind,
            state,
        }
    }

    pub fn state(&self) -> GeState {
        self.state
    }

    /// Outcome of the current slot (1 = delivered), then advance the chain.
    pub fn next<R: Rng>(&mut self, rng: &mut R) -> u8 {
        match self.kind {
            ChannelKind::BernoulliIid { p } => u8::from(rng.random::<f64>() < p),
            ChannelKind::GilbertElliott { p1, p2, p12, p21, .. } => {
                let (success, leave) = match self.state {
                    GeState::Good => (p1, p12),
                    GeState::Bad => (p2, p21),
                };
                let nu = u8::from(rng.random::<f64>() < success);
                if rng.random::<f64>() < leave {
                    self.state = match self.state {
                        GeState::Good => GeState::Bad,
                        GeState::Bad => GeState::Good,
                    };
                }
                nu
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropoutTrace {
    pub nu: Vec<u8>,
    /// Hidden channel state per slot, Gilbert-Elliott only.
    pub states: Option<Vec<GeState>>,
}

pub fn sample_dropouts<R: Rng>(spec: &ChannelSpec, horizon: usize, rng: &mut R) -> DropoutTrace {
    let mut sampler = DropoutSampler::new(spec, rng);
    let track = matches!(spec.kind, ChannelKind::GilbertElliott { .. });
    let mut nu = Vec::with_capacity(horizon);
    let mut states = Vec::new();
    for _ in 0..horizon {
        if track {
            states.push(sampler.state());
        }
        nu.push(sampler.next(rng));
    }
    DropoutTrace {
        nu,
        states: track.then_some(states),
    }
}
