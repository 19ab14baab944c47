//! Scrambled Sobol' draws.
//!
//! Bit-level construction, so other implementations can reproduce the tensor
//! exactly:
//!
//! 1. Unscrambled points come from the Joe-Kuo direction numbers in Gray-code
//!    order with 32-bit integers. Point 0 (all zeros) is skipped, so the first
//!    returned point is the generator's point 1 (0.5 in every coordinate).
//! 2. A `ChaCha8Rng` is seeded with `seed_from_u64(seed)`. Dimensions are
//!    processed in order; each consumes 31 `next_u32` values for the rows
//!    `j = 1..=31` of a lower-triangular binary matrix, then one more for the
//!    digital shift. Row `j` (`j = 0` is the most significant digit) has mask
//!    `(1 << (31 - j)) | (r_j & (u32::MAX << (32 - j)))`; row 0 is `1 << 31`.
//!    The scrambled integer's digit `j` is the parity of `x & mask_j`; the
//!    result is XORed with the shift.
//! 3. `u = y / 2^32`; values outside `[2^-53, 1 - 2^-53]` are nudged inside
//!    and counted, then mapped through AS 241.

mod direction_numbers;
mod normal;

use std::io::{Read, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::modelspec::ModelSpec;
use direction_numbers::{DIRECTION_TABLE, MAX_DIM};
pub use normal::inverse_normal_cdf;

pub const SUPPORTED_DIMENSIONS: usize = MAX_DIM;
pub const DEFAULT_DRAWS: usize = 1024;
pub const SCRAMBLE_DESCRIPTOR: &str = "sobol-joe-kuo-6.21201/gray/skip1;matousek-lms+digital-shift/chacha8/32bit";

const MAGIC: &[u8; 8] = b"MXLDRAWS";
const FORMAT_VERSION: u32 = 1;
const TWO_POW_32: f64 = 4_294_967_296.0;

#[derive(Debug, Error)]
pub enum QmcError {
    #[error("dimension {dim} not supported (direction numbers cover {max})")]
    DimUnsupported { dim: usize, max: usize },
    #[error("point count must be at least 1")]
    EmptyRequest,
    #[error("too many points requested: {0}")]
    TooManyPoints(usize),
    #[error("malformed draw dump: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major `rows x cols` matrix of points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl PointMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.get(i, j))
    }
}

fn direction_vectors(dim: usize) -> [u32; 32] {
    let mut v = [0u32; 32];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (31 - k);
        }
        return v;
    }
    let (poly, m) = DIRECTION_TABLE[dim];
    let s = (32 - poly.leading_zeros() - 1) as usize;
    for k in 0..s.min(32) {
        v[k] = m[k] << (31 - k);
    }
    for k in s..32 {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for i in 1..s {
            if (poly >> (s - i)) & 1 == 1 {
                x ^= v[k - i];
            }
        }
        v[k] = x;
    }
    v
}

fn check_request(count: usize, dim: usize) -> Result<(), QmcError> {
    if count == 0 {
        return Err(QmcError::EmptyRequest);
    }
    if dim == 0 || dim > MAX_DIM {
        return Err(QmcError::DimUnsupported { dim, max: MAX_DIM });
    }
    if count >= u32::MAX as usize {
        return Err(QmcError::TooManyPoints(count));
    }
    Ok(())
}

/// Integer Sobol' points `1..=count`, row-major.
fn sobol_integers(count: usize, dim: usize) -> Result<Vec<u32>, QmcError> {
    check_request(count, dim)?;
    let dirs: Vec<[u32; 32]> = (0..dim).map(direction_vectors).collect();
    let mut state = vec![0u32; dim];
    let mut out = Vec::with_capacity(count * dim);
    for i in 1..=count {
        let c = (i - 1).trailing_ones() as usize;
        for (x, v) in state.iter_mut().zip(&dirs) {
            *x ^= v[c];
        }
        out.extend_from_slice(&state);
    }
    Ok(out)
}

/// The first `count` points of the unscrambled sequence, skipping the origin.
pub fn sobol_points(count: usize, dim: usize) -> Result<PointMatrix, QmcError> {
    let ints = sobol_integers(count, dim)?;
    Ok(PointMatrix { rows: count, cols: dim, data: ints.into_iter().map(|x| x as f64 / TWO_POW_32).collect() })
}

struct Scrambler {
    masks: [u32; 32],
    shift: u32,
}

impl Scrambler {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let mut masks = [0u32; 32];
        masks[0] = 1 << 31;
        for (j, mask) in masks.iter_mut().enumerate().skip(1) {
            *mask = (1 << (31 - j)) | (rng.next_u32() & (u32::MAX << (32 - j)));
        }
        Scrambler { masks, shift: rng.next_u32() }
    }

    #[inline]
    fn apply(&self, x: u32) -> u32 {
        let mut y = 0u32;
        for (j, &m) in self.masks.iter().enumerate() {
            y |= ((x & m).count_ones() & 1) << (31 - j);
        }
        y ^ self.shift
    }
}

fn scramblers(dim: usize, seed: u64) -> Vec<Scrambler> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| Scrambler::draw(&mut rng)).collect()
}

/// Linear matrix scramble followed by a digital shift. Inputs are truncated
/// to 32 binary digits.
pub fn scramble_shift(points: &PointMatrix, seed: u64) -> PointMatrix {
    let sc = scramblers(points.cols, seed);
    let data = points
        .data
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let x = (u * TWO_POW_32).clamp(0.0, u32::MAX as f64) as u32;
            sc[k % points.cols].apply(x) as f64 / TWO_POW_32
        })
        .collect();
    PointMatrix { rows: points.rows, cols: points.cols, data }
}

const NUDGE: f64 = 1.0 / 9_007_199_254_740_992.0; // 2^-53

/// Elementwise inverse normal CDF. Entries outside `[2^-53, 1 - 2^-53]` are
/// moved to the nearest bound; the second value counts them.
pub fn normal_draws(u: &PointMatrix) -> (PointMatrix, usize) {
    let mut nudged = 0;
    let data = u
        .data
        .iter()
        .map(|&p| {
            let q = p.clamp(NUDGE, 1.0 - NUDGE);
            if q != p {
                nudged += 1;
            }
            inverse_normal_cdf(q)
        })
        .collect();
    (PointMatrix { rows: u.rows, cols: u.cols, data }, nudged)
}

/// Standard-normal draws for every respondent, fixed for an estimation run.
///
/// Stored respondent-major: respondent `n`, draw `r`, dimension `d` lives at
/// `(n * R + r) * D + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawTensor {
    pub n_respondents: usize,
    pub n_draws: usize,
    /// Name of each dimension, in spec declaration order.
    pub symbols: Vec<String>,
    pub seed: u64,
    pub scramble: String,
    /// Uniforms moved off 0 or 1 before the normal transform.
    pub nudged: usize,
    data: Vec<f64>,
}

impl DrawTensor {
    /// Wraps externally produced draws laid out respondent-major.
    pub fn from_values(
        symbols: Vec<String>,
        n_respondents: usize,
        n_draws: usize,
        seed: u64,
        data: Vec<f64>,
    ) -> Result<Self, QmcError> {
        if data.len() != n_respondents * n_draws * symbols.len() {
            return Err(QmcError::Format(format!(
                "expected {} values, got {}",
                n_respondents * n_draws * symbols.len(),
                data.len()
            )));
        }
        Ok(DrawTensor { n_respondents, n_draws, symbols, seed, scramble: "external".into(), nudged: 0, data })
    }

    pub fn dims(&self) -> usize {
        self.symbols.len()
    }

    /// All `R x D` draws of respondent `n`.
    pub fn respondent(&self, n: usize) -> &[f64] {
        let w = self.n_draws * self.dims();
        &self.data[n * w..(n + 1) * w]
    }

    pub fn draw(&self, n: usize, r: usize) -> &[f64] {
        let d = self.dims();
        let start = (n * self.n_draws + r) * d;
        &self.data[start..start + d]
    }

    pub fn dim_index(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Little-endian dump: magic `MXLDRAWS`, `u32` version, `u64` N, R, D and
    /// seed, then D symbols as `u32` byte length + UTF-8, then `N*R*D` `f64`s.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), QmcError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for v in [self.n_respondents, self.n_draws, self.dims()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        for s in &self.symbols {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, QmcError> {
        fn take<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K], QmcError> {
            let mut b = [0u8; K];
            r.read_exact(&mut b)?;
            Ok(b)
        }
        if &take::<8, _>(&mut r)? != MAGIC {
            return Err(QmcError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(QmcError::Format(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(take(&mut r)?) as usize;
        let rr = u64::from_le_bytes(take(&mut r)?) as usize;
        let d = u64::from_le_bytes(take(&mut r)?) as usize;
        let seed = u64::from_le_bytes(take(&mut r)?);
        let mut symbols = Vec::with_capacity(d);
        for _ in 0..d {
            let len = u32::from_le_bytes(take(&mut r)?) as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            symbols.push(String::from_utf8(buf).map_err(|e| QmcError::Format(e.to_string()))?);
        }
        let total = n
            .checked_mul(rr)
            .and_then(|x| x.checked_mul(d))
            .ok_or_else(|| QmcError::Format("size overflow".into()))?;
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            data.push(f64::from_le_bytes(take(&mut r)?));
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(QmcError::Format("trailing bytes".into()));
        }
        Ok(DrawTensor {
            n_respondents: n,
            n_draws: rr,
            symbols,
            seed,
            scramble: SCRAMBLE_DESCRIPTOR.to_string(),
            nudged: 0,
            data,
        })
    }
}

/// Draws for the named dimensions: one `(N*R) x D` scrambled sequence, with
/// respondent `n` taking rows `[n*R, (n+1)*R)`.
pub fn allocate_draws_for(symbols: Vec<String>, n: usize, r: usize, seed: u64) -> Result<DrawTensor, QmcError> {
    if r == 0 {
        return Err(QmcError::EmptyRequest);
    }
    let d = symbols.len();
    let mut tensor = DrawTensor {
        n_respondents: n,
        n_draws: r,
        symbols,
        seed,
        scramble: SCRAMBLE_DESCRIPTOR.to_string(),
        nudged: 0,
        data: Vec::new(),
    };
    if d == 0 || n == 0 {
        return Ok(tensor);
    }
    let count = n.checked_mul(r).ok_or(QmcError::TooManyPoints(usize::MAX))?;
    let ints = sobol_integers(count, d)?;
    let sc = scramblers(d, seed);
    let mut nudged = 0;
    tensor.data = ints
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let u = sc[k % d].apply(x) as f64 / TWO_POW_32;
            let q = u.clamp(NUDGE, 1.0 - NUDGE);
            nudged += (q != u) as usize;
            inverse_normal_cdf(q)
        })
        .collect();
    tensor.nudged = nudged;
    Ok(tensor)
}

/// Draw tensor shaped for `spec`; dimensions follow
/// [`ModelSpec::draw_symbols`].
pub fn allocate_draws(spec: &ModelSpec, n: usize, r: usize, seed: u64) -> Result<DrawTensor, QmcError> {
    allocate_draws_for(spec.draw_symbols(), n, r, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::bundled_spec;
    use rand::Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn first_points_of_dimension_one() {
        let p = sobol_points(3, 1).unwrap();
        assert_eq!(p.data, vec![0.5, 0.75, 0.25]);
        let p = sobol_points(8, 1).unwrap();
        assert_eq!(p.data, vec![0.5, 0.75, 0.25, 0.375, 0.875, 0.625, 0.125, 0.1875]);
    }

    #[test]
    fn matches_reference_generator_in_high_dimensions() {
        // Values from an independent Joe-Kuo implementation, indexed from the
        // origin (our row i - 1), for dimensions 5, 20, 41 and 63.
        let reference: [(usize, [f64; 4]); 7] = [
            (1, [0.5; 4]),
            (2, [0.75, 0.25, 0.75, 0.75]),
            (3, [0.25, 0.75, 0.25, 0.25]),
            (7, [0.375, 0.875, 0.875, 0.375]),
            (100, [0.7421875, 0.7578125, 0.6640625, 0.6484375]),
            (1023, [0.4384765625, 0.8662109375, 0.9736328125, 0.0400390625]),
            (1099, [0.72705078125, 0.75146484375, 0.79345703125, 0.95849609375]),
        ];
        let p = sobol_points(1099, 64).unwrap();
        for (i, want) in reference {
            let got: Vec<f64> = [5, 20, 41, 63].iter().map(|&d| p.get(i - 1, d)).collect();
            assert_eq!(got, want, "point {i}");
        }
    }

    #[test]
    fn dimension_limits() {
        assert!(matches!(sobol_points(4, 65), Err(QmcError::DimUnsupported { dim: 65, max: 64 })));
        assert!(matches!(sobol_points(4, 0), Err(QmcError::DimUnsupported { .. })));
        assert!(matches!(sobol_points(0, 2), Err(QmcError::EmptyRequest)));
        assert_eq!(SUPPORTED_DIMENSIONS, 64);
    }

    #[test]
    fn two_dimensional_chi_square_uniformity() {
        let p = sobol_points(1024, 2).unwrap();
        let mut cells = [0u32; 256];
        for i in 0..p.rows {
            let a = (p.get(i, 0) * 16.0) as usize;
            let b = (p.get(i, 1) * 16.0) as usize;
            cells[a * 16 + b] += 1;
        }
        let expected = 4.0;
        let stat: f64 = cells.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let crit = ChiSquared::new(255.0).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "chi2 {stat} >= {crit}");
    }

    #[test]
    fn scrambling_is_deterministic_and_seed_dependent() {
        let p = sobol_points(256, 5).unwrap();
        let a = scramble_shift(&p, 7);
        assert_eq!(a, scramble_shift(&p, 7));
        assert_ne!(a, scramble_shift(&p, 8));
        assert!(a.data.iter().all(|&u| (0.0..1.0).contains(&u)));
    }

    #[test]
    fn scrambled_mean_is_centred() {
        for seed in [1, 42, 20190920] {
            let p = scramble_shift(&sobol_points(1024, 3).unwrap(), seed);
            for d in 0..3 {
                let m = p.column(d).sum::<f64>() / 1024.0;
                assert!((m - 0.5).abs() < 0.01, "seed {seed} dim {d} mean {m}");
            }
        }
    }

    #[test]
    fn scrambling_preserves_net_structure() {
        // Each elementary interval of width 1/1024 in one dimension holds
        // exactly one of the first 1024 points, before and after scrambling.
        let p = scramble_shift(&sobol_points(1023, 4).unwrap(), 99);
        for d in 0..4 {
            let mut hit = vec![0u8; 1024];
            for u in p.column(d) {
                hit[(u * 1024.0) as usize] += 1;
            }
            assert_eq!(hit.iter().filter(|&&h| h == 1).count(), 1023);
        }
    }

    #[test]
    fn normal_draws_nudge_endpoints() {
        let u = PointMatrix { rows: 1, cols: 3, data: vec![0.0, 0.5, 0.975] };
        let (z, nudged) = normal_draws(&u);
        assert_eq!(nudged, 1);
        assert!(z.data[0].is_finite() && z.data[0] < -8.0);
        assert_eq!(z.data[1], 0.0);
        assert!((z.data[2] - 1.959964).abs() < 1e-6);
    }

    #[test]
    fn allocation_shape_and_partition() {
        let spec = bundled_spec("paper_mmnl1").unwrap();
        let t = allocate_draws(&spec, 5, 16, 3).unwrap();
        assert_eq!(t.dims(), 9);
        assert_eq!(t.symbols[0], "rooms");
        assert_eq!(t.symbols[8], "eta.pt");
        // A 3-respondent tensor is a prefix of the 5-respondent one.
        let short = allocate_draws(&spec, 3, 16, 3).unwrap();
        assert_eq!(short.values(), &t.values()[..3 * 16 * 9]);
        assert_eq!(t.draw(2, 5), &t.respondent(2)[5 * 9..6 * 9]);
        assert!(t.values().iter().all(|z| z.is_finite()));
        let cmnl = bundled_spec("paper_cmnl").unwrap();
        assert_eq!(allocate_draws(&cmnl, 5, 16, 3).unwrap().dims(), 0);
    }

    #[test]
    fn dump_round_trip() {
        let t = allocate_draws_for(vec!["a".into(), "eta.car".into()], 3, 4, 11).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 32 + (4 + 1) + (4 + 7) + 3 * 4 * 2 * 8);
        let back = DrawTensor::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        buf.push(0);
        assert!(DrawTensor::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn kolmogorov_smirnov_per_dimension() {
        // Asymptotic critical value sqrt(-ln(alpha / 2) / 2) / sqrt(n).
        let n = 4096;
        let p = scramble_shift(&sobol_points(n, 7).unwrap(), 2024);
        let crit = (-(0.001f64 / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt();
        for d in 0..7 {
            let mut col: Vec<f64> = p.column(d).collect();
            col.sort_by(f64::total_cmp);
            let dn = col
                .iter()
                .enumerate()
                .map(|(i, &u)| ((i + 1) as f64 / n as f64 - u).max(u - i as f64 / n as f64))
                .fold(0.0, f64::max);
            assert!(dn < crit, "dim {d}: D={dn} crit={crit}");
        }
    }

    #[test]
    fn quasi_random_beats_pseudo_random_on_a_quadratic() {
        let dim = 5;
        let f = |x: &[f64]| x.iter().map(|u| (u - 0.5).powi(2)).sum::<f64>();
        let exact = dim as f64 / 12.0;
        let p = scramble_shift(&sobol_points(1024, dim).unwrap(), 5);
        let qmc = (0..1024).map(|i| f(p.row(i))).sum::<f64>() / 1024.0;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mc_err: f64 = (0..30)
            .map(|_| {
                let est = (0..1024)
                    .map(|_| {
                        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
                        f(&x)
                    })
                    .sum::<f64>()
                    / 1024.0;
                (est - exact).abs()
            })
            .sum::<f64>()
            / 30.0;
        assert!((qmc - exact).abs() < mc_err, "qmc {} mc {mc_err}", (qmc - exact).abs());
    }
}
