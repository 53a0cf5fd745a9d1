//! Lifted horizon matrices and the Monte Carlo moments that turn the
//! expected finite-horizon cost into a quadratic form in the policy.
//!
//! Channel matrices `S`, `G` are diagonal 0/1 masks, so every expectation
//! of the form `E[Xᵀ α Y]` is `α ∘ E[x yᵀ]` for their diagonals `x`, `y`.
//! Dropout patterns are therefore histogrammed once and all moments are
//! weighted sums over the distinct patterns.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;
use crate::protocol::{g_mask, s_mask, ProtocolKind, ProtocolSpec};
use crate::stochastics::{substream, NoiseSampler, NoiseSpec, SaturationKind, SaturationSpec, StreamSource};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const MIN_SAMPLES: usize = 10_000;
const CHUNK: usize = 4096;
const L_REL_TOL: f64 = 1e-8;

/// `x_{t:N+1} = 𝒜 x_t + ℬ u_{t:N} + 𝒟 w_{t:N}` and the stacked weights.
#[derive(Debug, Clone)]
pub struct LiftedDynamics {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub cal_a: DMatrix<f64>,
    pub cal_b: DMatrix<f64>,
    pub cal_d: DMatrix<f64>,
    pub cal_q: DMatrix<f64>,
    pub cal_r: DMatrix<f64>,
    /// `ℬᵀ 𝒬 ℬ + ℛ`
    pub alpha: DMatrix<f64>,
}

pub fn build_lifted(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    q_f: &DMatrix<f64>,
    r: &DMatrix<f64>,
    n: usize,
) -> Result<LiftedDynamics> {
    let (d, m) = (a.nrows(), b.ncols());
    if n == 0 {
        return Err(Error::InvalidArgument("horizon N must be at least 1".into()));
    }
    if q.shape() != (d, d) || q_f.shape() != (d, d) || r.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!(
            "weights must be Q, Q_f {d}x{d} and R {m}x{m}"
        )));
    }
    linalg::check_psd(q, "Q", 1e-10)?;
    linalg::check_psd(q_f, "Q_f", 1e-10)?;
    linalg::check_pd(r, "R")?;

    let mut powers = vec![DMatrix::identity(d, d)];
    for k in 1..=n {
        powers.push(a * &powers[k - 1]);
    }
    let mut cal_a = DMatrix::zeros(d * (n + 1), d);
    let mut cal_b = DMatrix::zeros(d * (n + 1), m * n);
    let mut cal_d = DMatrix::zeros(d * (n + 1), d * n);
    for i in 0..=n {
        cal_a.view_mut((i * d, 0), (d, d)).copy_from(&powers[i]);
        for j in 0..i {
            let p = &powers[i - 1 - j];
            cal_b.view_mut((i * d, j * m), (d, m)).copy_from(&(p * b));
            cal_d.view_mut((i * d, j * d), (d, d)).copy_from(p);
        }
    }
    let mut cal_q = DMatrix::zeros(d * (n + 1), d * (n + 1));
    for i in 0..n {
        cal_q.view_mut((i * d, i * d), (d, d)).copy_from(q);
    }
    cal_q.view_mut((n * d, n * d), (d, d)).copy_from(q_f);
    let mut cal_r = DMatrix::zeros(m * n, m * n);
    for i in 0..n {
        cal_r.view_mut((i * m, i * m), (m, m)).copy_from(r);
    }
    let alpha = linalg::symmetrize(&(cal_b.transpose() * &cal_q * &cal_b + &cal_r));
    Ok(LiftedDynamics { n, d, m, cal_a, cal_b, cal_d, cal_q, cal_r, alpha })
}

/// Raw first and second moments of the channel masks over dropout patterns.
#[derive(Debug, Clone)]
struct MaskMoments {
    gg: DMatrix<f64>,
    /// `E[ν_a g sᵀ]`, `a = 0..N-2`
    nu_gs: Vec<DMatrix<f64>>,
    /// `E[ν_a ν_b s sᵀ]`, row-major over `(a, b)`
    nunu_ss: Vec<DMatrix<f64>>,
    ss: DMatrix<f64>,
    g: DVector<f64>,
    s: DVector<f64>,
    nu_s: Vec<DVector<f64>>,
}

fn mask_moments(spec: &ProtocolSpec, m: usize, weighted: &[(Vec<u8>, f64)]) -> MaskMoments {
    let (n, n_r) = (spec.n, spec.n_r);
    let h = n - 1;
    let mn = m * n;
    let mut mm = MaskMoments {
        gg: DMatrix::zeros(mn, mn),
        nu_gs: vec![DMatrix::zeros(mn, mn); h],
        nunu_ss: vec![DMatrix::zeros(mn, mn); h * h],
        ss: DMatrix::zeros(mn, mn),
        g: DVector::zeros(mn),
        s: DVector::zeros(mn),
        nu_s: vec![DVector::zeros(mn); h],
    };
    for (nu, w) in weighted {
        let s = DVector::from_vec(s_mask(nu, n, n_r, m));
        let g = match spec.kind {
            ProtocolKind::Tp1 => s.clone(),
            ProtocolKind::Tp2 => DVector::from_vec(g_mask(nu, n, n_r, m)),
        };
        let gs = &g * s.transpose() * *w;
        let ss = &s * s.transpose() * *w;
        mm.gg += &g * g.transpose() * *w;
        mm.ss += &ss;
        mm.g += &g * *w;
        mm.s += &s * *w;
        for a in 0..h {
            if nu[a] == 1 {
                mm.nu_gs[a] += &gs;
                mm.nu_s[a] += &s * *w;
                for b in 0..h {
                    if nu[b] == 1 {
                        mm.nunu_ss[a * h + b] += &ss;
                    }
                }
            }
        }
    }
    mm
}

/// Channel-dependent blocks of the cost.
#[derive(Debug, Clone)]
pub struct ChannelMoments {
    pub sigma_g: DMatrix<f64>,
    pub sigma_sg_tilde: DMatrix<f64>,
    pub sigma_snl_tilde: DMatrix<f64>,
    pub mu_g: DMatrix<f64>,
    pub mu_s_tilde: DMatrix<f64>,
    pub mu_s: DMatrix<f64>,
    pub sigma_s: DMatrix<f64>,
    pub p_design: f64,
    pub samples: usize,
    /// Moments are exact (deterministic channel or explicit enumeration).
    pub exact: bool,
}

fn channel_from_masks(alpha: &DMatrix<f64>, mm: &MaskMoments, n: usize, m: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let h = n - 1;
    let mn = m * n;
    let free = m * n * h / 2;
    let tail = |l: usize| (l * m, mn - l * m); // 𝔠_ℓ picks rows ℓm..mN, ℓ = 1..N-1
    let sigma_g = alpha.component_mul(&mm.gg);
    let mut sigma_sg_tilde = DMatrix::zeros(mn, free);
    let mut mu_s_tilde = DMatrix::zeros(mn, free);
    let mut sigma_snl_tilde = DMatrix::zeros(free, free);
    let mut col = 0;
    for l in 1..=h {
        let (start, len) = tail(l);
        let sg = alpha.component_mul(&mm.nu_gs[l - 1]);
        sigma_sg_tilde.columns_mut(col, len).copy_from(&sg.columns(start, len));
        for k in 0..len {
            mu_s_tilde[(start + k, col + k)] = mm.nu_s[l - 1][start + k];
        }
        let mut row = 0;
        for nn in 1..=h {
            let (rs, rl) = tail(nn);
            let snl = alpha.component_mul(&mm.nunu_ss[(nn - 1) * h + (l - 1)]);
            sigma_snl_tilde
                .view_mut((row, col), (rl, len))
                .copy_from(&snl.view((rs, start), (rl, len)));
            row += rl;
        }
        col += len;
    }
    let mu_g = DMatrix::from_diagonal(&mm.g);
    let mu_s = DMatrix::from_diagonal(&mm.s);
    let sigma_s = alpha.component_mul(&mm.ss);
    (sigma_g, sigma_sg_tilde, sigma_snl_tilde, mu_g, mu_s_tilde, mu_s, sigma_s)
}

fn finish_channel(
    lifted: &LiftedDynamics,
    spec: &ProtocolSpec,
    weighted: &[(Vec<u8>, f64)],
    p_design: f64,
    samples: usize,
    exact: bool,
) -> ChannelMoments {
    let mm = mask_moments(spec, lifted.m, weighted);
    let (sigma_g, sigma_sg_tilde, sigma_snl_tilde, mu_g, mu_s_tilde, mu_s, sigma_s) =
        channel_from_masks(&lifted.alpha, &mm, spec.n, lifted.m);
    ChannelMoments { sigma_g, sigma_sg_tilde, sigma_snl_tilde, mu_g, mu_s_tilde, mu_s, sigma_s, p_design, samples, exact }
}

fn check_spec(lifted: &LiftedDynamics, spec: &ProtocolSpec, p: f64) -> Result<usize> {
    if spec.n != lifted.n {
        return Err(Error::DimensionMismatch(format!("protocol N={} but lifted N={}", spec.n, lifted.n)));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("design probability {p} outside [0, 1]")));
    }
    let len = spec.pattern_len();
    if len > 24 {
        return Err(Error::InvalidArgument(format!("dropout pattern length {len} too long")));
    }
    Ok(len)
}

fn bits_to_pattern(bits: u32, len: usize) -> Vec<u8> {
    (0..len).map(|i| ((bits >> i) & 1) as u8).collect()
}

/// Exact expectations by enumerating all `2^L` patterns with their
/// Bernoulli probabilities.
pub fn exact_channel_moments(lifted: &LiftedDynamics, spec: &ProtocolSpec, p: f64) -> Result<ChannelMoments> {
    let len = check_spec(lifted, spec, p)?;
    let weighted: Vec<(Vec<u8>, f64)> = (0u32..1 << len)
        .map(|bits| {
            let nu = bits_to_pattern(bits, len);
            let ones = nu.iter().filter(|v| **v == 1).count() as i32;
            (nu, p.powi(ones) * (1.0 - p).powi(len as i32 - ones))
        })
        .filter(|(_, w)| *w > 0.0)
        .collect();
    Ok(finish_channel(lifted, spec, &weighted, p, 0, true))
}

/// Monte Carlo channel moments under i.i.d. Bernoulli(`p_design`) dropouts.
/// A deterministic channel (`p ∈ {0, 1}`) short-circuits to the single
/// possible pattern.
pub fn estimate_channel_moments(
    lifted: &LiftedDynamics,
    spec: &ProtocolSpec,
    p_design: f64,
    samples: usize,
    seed: u64,
) -> Result<ChannelMoments> {
    let len = check_spec(lifted, spec, p_design)?;
    if p_design == 0.0 || p_design == 1.0 {
        let nu = vec![p_design as u8; len];
        return Ok(finish_channel(lifted, spec, &[(nu, 1.0)], p_design, samples, true));
    }
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    let chunks = samples.div_ceil(CHUNK);
    let histograms: Vec<BTreeMap<u32, u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64, StreamSource::MomentChannel);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut hist = BTreeMap::new();
            for _ in 0..count {
                let mut bits = 0u32;
                for i in 0..len {
                    if rng.random::<f64>() < p_design {
                        bits |= 1 << i;
                    }
                }
                *hist.entry(bits).or_insert(0u64) += 1;
            }
            hist
        })
        .collect();
    let mut total: BTreeMap<u32, u64> = BTreeMap::new();
    for h in histograms {
        for (k, v) in h {
            *total.entry(k).or_insert(0) += v;
        }
    }
    let weighted: Vec<(Vec<u8>, f64)> = total
        .into_iter()
        .map(|(bits, cnt)| (bits_to_pattern(bits, len), cnt as f64 / samples as f64))
        .collect();
    Ok(finish_channel(lifted, spec, &weighted, p_design, samples, false))
}

#[derive(Debug, Clone)]
pub struct NoiseMoments {
    /// `E[e eᵀ]`, `d(N-1)` square.
    pub sigma_e: DMatrix<f64>,
    /// `E[w_{t:N} e(w_{t:N-1})ᵀ]`, `dN × d(N-1)`.
    pub sigma_e_prime: DMatrix<f64>,
    /// `blkdiag(Σ_w, …)`, `dN` square.
    pub sigma_w: DMatrix<f64>,
}

pub fn estimate_noise_moments(
    noise: &NoiseSpec,
    sat: &SaturationSpec,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<NoiseMoments> {
    let d = noise.dim();
    let h = n.saturating_sub(1);
    let mut sigma_w = DMatrix::zeros(d * n, d * n);
    for k in 0..n {
        sigma_w.view_mut((k * d, k * d), (d, d)).copy_from(&noise.covariance);
    }
    if noise.is_zero() || h == 0 {
        return Ok(NoiseMoments {
            sigma_e: DMatrix::zeros(d * h, d * h),
            sigma_e_prime: DMatrix::zeros(d * n, d * h),
            sigma_w,
        });
    }
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    let sampler = NoiseSampler::new(noise);
    let (dw, de) = (d * n, d * h);
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64, StreamSource::MomentNoise);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut ws = DMatrix::zeros(dw, count);
            for j in 0..count {
                let mut col = ws.column_mut(j);
                for k in 0..n {
                    sampler.draw_into(&mut rng, &mut col.as_mut_slice()[k * d..(k + 1) * d]);
                }
            }
            let mut es = ws.rows(0, de).into_owned();
            es.iter_mut().for_each(|v| *v = sat.apply_scalar(*v));
            (&es * es.transpose(), &ws * es.transpose())
        })
        .collect();
    let mut ee = DMatrix::zeros(de, de);
    let mut we = DMatrix::zeros(dw, de);
    for (a, b) in partial {
        ee += a;
        we += b;
    }
    let inv = 1.0 / samples as f64;
    Ok(NoiseMoments { sigma_e: linalg::symmetrize(&(ee * inv)), sigma_e_prime: we * inv, sigma_w })
}

#[derive(Debug, Clone)]
pub struct MomentSet {
    pub channel: ChannelMoments,
    pub noise: NoiseMoments,
    /// `[[Σ_G, Σ̃_SG], [Σ̃_SGᵀ, Σ̃_Snl]]`, PSD-projected.
    pub cal_l: DMatrix<f64>,
    /// `2 [𝒬ℬ μ_G, 𝒬ℬ μ̃_S]ᵀ`
    pub cal_m: DMatrix<f64>,
    /// Smallest eigenvalue of `ℒ` before projection.
    pub min_eig_l: f64,
}

impl MomentSet {
    pub fn sigma_e(&self) -> &DMatrix<f64> {
        &self.noise.sigma_e
    }
}

pub fn assemble(lifted: &LiftedDynamics, channel: ChannelMoments, noise: NoiseMoments) -> Result<MomentSet> {
    let mn = lifted.m * lifted.n;
    let free = channel.sigma_snl_tilde.nrows();
    if channel.sigma_g.shape() != (mn, mn) || channel.sigma_sg_tilde.shape() != (mn, free) {
        return Err(Error::DimensionMismatch("channel moments do not match the lifted dimensions".into()));
    }
    let mut l = DMatrix::zeros(mn + free, mn + free);
    l.view_mut((0, 0), (mn, mn)).copy_from(&channel.sigma_g);
    l.view_mut((0, mn), (mn, free)).copy_from(&channel.sigma_sg_tilde);
    l.view_mut((mn, 0), (free, mn)).copy_from(&channel.sigma_sg_tilde.transpose());
    l.view_mut((mn, mn), (free, free)).copy_from(&channel.sigma_snl_tilde);
    let l = linalg::symmetrize(&l);
    let min_eig = linalg::min_eigenvalue(&l);
    let norm = linalg::sym_norm2(&l);
    if min_eig < -L_REL_TOL * norm {
        return Err(Error::IndefiniteL { min_eig, norm });
    }
    let cal_l = linalg::project_psd(&l);
    let qb = &lifted.cal_q * &lifted.cal_b;
    let mut mt = DMatrix::zeros(qb.nrows(), mn + free);
    mt.columns_mut(0, mn).copy_from(&(&qb * &channel.mu_g));
    mt.columns_mut(mn, free).copy_from(&(&qb * &channel.mu_s_tilde));
    Ok(MomentSet { channel, noise, cal_l, cal_m: mt.transpose() * 2.0, min_eig_l: min_eig })
}

/// Everything the moments depend on; also the cache key.
#[derive(Debug, Clone)]
pub struct MomentInputs {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub q_f: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub protocol: ProtocolSpec,
    pub p_design: f64,
    pub noise: NoiseSpec,
    pub sat: SaturationSpec,
    pub seed: u64,
    pub samples: usize,
}

impl MomentInputs {
    pub fn lifted(&self) -> Result<LiftedDynamics> {
        build_lifted(&self.a, &self.b, &self.q, &self.q_f, &self.r, self.protocol.n)
    }

    /// SHA-256 over a canonical little-endian encoding of every input.
    pub fn cache_key(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"netspc-moments");
        h.update(CACHE_VERSION.to_le_bytes());
        for mat in [&self.a, &self.b, &self.q, &self.q_f, &self.r, &self.noise.covariance] {
            h.update((mat.nrows() as u64).to_le_bytes());
            h.update((mat.ncols() as u64).to_le_bytes());
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    h.update(mat[(i, j)].to_le_bytes());
                }
            }
        }
        h.update((self.protocol.n as u64).to_le_bytes());
        h.update((self.protocol.n_r as u64).to_le_bytes());
        h.update(self.protocol.kind.as_str().as_bytes());
        h.update(self.p_design.to_le_bytes());
        let sat_tag: &[u8] = match self.sat.kind {
            SaturationKind::Sigmoid => b"sigmoid",
            SaturationKind::HardSat => b"hard_sat",
            SaturationKind::PiecewiseLinear => b"piecewise_linear",
        };
        h.update(sat_tag);
        h.update(self.sat.phi_max.to_le_bytes());
        h.update(self.seed.to_le_bytes());
        h.update((self.samples as u64).to_le_bytes());
        hex::encode(h.finalize())
    }
}

pub fn compute_moments(inputs: &MomentInputs) -> Result<MomentSet> {
    let lifted = inputs.lifted()?;
    compute_with_lifted(inputs, &lifted)
}

fn compute_with_lifted(inputs: &MomentInputs, lifted: &LiftedDynamics) -> Result<MomentSet> {
    let channel = estimate_channel_moments(lifted, &inputs.protocol, inputs.p_design, inputs.samples, inputs.seed)?;
    let noise = estimate_noise_moments(&inputs.noise, &inputs.sat, inputs.protocol.n, inputs.samples, inputs.seed)?;
    assemble(lifted, channel, noise)
}

const CACHE_MAGIC: &[u8; 8] = b"NSPCMOM\0";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    Disabled,
}

pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("moments-{key}.bin"))
}

fn put_matrix(buf: &mut Vec<u8>, m: &DMatrix<f64>) {
    buf.extend((m.nrows() as u64).to_le_bytes());
    buf.extend((m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend(m[(i, j)].to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Cache("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let (r, c) = (self.u64()? as usize, self.u64()? as usize);
        if r.saturating_mul(c).saturating_mul(8) > self.buf.len() {
            return Err(Error::Cache("corrupt matrix header".into()));
        }
        let mut m = DMatrix::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                m[(i, j)] = self.f64()?;
            }
        }
        Ok(m)
    }
}

pub fn encode_moments(key: &str, set: &MomentSet) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend(CACHE_MAGIC);
    buf.extend(CACHE_VERSION.to_le_bytes());
    buf.extend(key.as_bytes());
    let ch = &set.channel;
    buf.extend(ch.p_design.to_le_bytes());
    buf.extend((ch.samples as u64).to_le_bytes());
    buf.push(ch.exact as u8);
    buf.extend(set.min_eig_l.to_le_bytes());
    for m in [
        &ch.sigma_g,
        &ch.sigma_sg_tilde,
        &ch.sigma_snl_tilde,
        &ch.mu_g,
        &ch.mu_s_tilde,
        &ch.mu_s,
        &ch.sigma_s,
        &set.noise.sigma_e,
        &set.noise.sigma_e_prime,
        &set.noise.sigma_w,
        &set.cal_l,
        &set.cal_m,
    ] {
        put_matrix(&mut buf, m);
    }
    buf
}

pub fn decode_moments(key: &str, bytes: &[u8]) -> Result<MomentSet> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    if r.take(key.len())? != key.as_bytes() {
        return Err(Error::Cache("key mismatch".into()));
    }
    let p_design = r.f64()?;
    let samples = r.u64()? as usize;
    let exact = r.take(1)?[0] == 1;
    let min_eig_l = r.f64()?;
    let channel = ChannelMoments {
        sigma_g: r.matrix()?,
        sigma_sg_tilde: r.matrix()?,
        sigma_snl_tilde: r.matrix()?,
        mu_g: r.matrix()?,
        mu_s_tilde: r.matrix()?,
        mu_s: r.matrix()?,
        sigma_s: r.matrix()?,
        p_design,
        samples,
        exact,
    };
    let noise = NoiseMoments { sigma_e: r.matrix()?, sigma_e_prime: r.matrix()?, sigma_w: r.matrix()? };
    let cal_l = r.matrix()?;
    let cal_m = r.matrix()?;
    if r.pos != bytes.len() {
        return Err(Error::Cache("trailing bytes".into()));
    }
    Ok(MomentSet { channel, noise, cal_l, cal_m, min_eig_l })
}

/// Load moments from `dir` if cached, otherwise compute and store them
/// (written to a temporary file, then renamed).
pub fn load_or_compute(inputs: &MomentInputs, dir: Option<&Path>) -> Result<(MomentSet, CacheStatus)> {
    let Some(dir) = dir else {
        return Ok((compute_moments(inputs)?, CacheStatus::Disabled));
    };
    let key = inputs.cache_key();
    let path = cache_path(dir, &key);
    if let Ok(mut f) = fs::File::open(&path) {
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)?;
        if let Ok(set) = decode_moments(&key, &bytes) {
            return Ok((set, CacheStatus::Hit));
        }
    }
    let set = compute_moments(inputs)?;
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".moments-{key}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode_moments(&key, &set))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &path)?;
    Ok((set, CacheStatus::Miss))
}
