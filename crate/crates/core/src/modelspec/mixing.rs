use super::{ModelSpec, ParamRole, SpecError, Transform};
use crate::dataset::{Covariate, Respondent};

#[derive(Debug, Clone)]
pub(crate) struct BlockMap {
    pub coefs: Vec<usize>,
    pub dims: Vec<usize>,
    /// Row-major lower triangle.
    pub chol: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct InterceptMap {
    pub mode_slot: usize,
    pub baseline: f64,
    pub shifts: Vec<(Covariate, f64)>,
}

/// A parameter vector decoded against a spec: everything needed to turn a
/// standard-normal draw vector into tastes and error components.
#[derive(Debug, Clone)]
pub struct MixingMap {
    pub(crate) base: Vec<f64>,
    pub(crate) transforms: Vec<Transform>,
    /// `(coefficient, draw dim, scale)` for independent random tastes.
    pub(crate) diag: Vec<(usize, usize, f64)>,
    pub(crate) blocks: Vec<BlockMap>,
    /// `(mode slot, draw dim, scale)`.
    pub(crate) error_components: Vec<(usize, usize, f64)>,
    pub(crate) intercepts: Vec<InterceptMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Error component per mode slot (zero where the spec has none).
    pub eta: [f64; 3],
    pub saturated: usize,
}

impl Realization {
    pub fn new(n_coefficients: usize) -> Self {
        Realization { alpha: vec![0.0; n_coefficients], beta: vec![0.0; n_coefficients], eta: [0.0; 3], saturated: 0 }
    }
}

impl MixingMap {
    /// Draw dimensions follow [`ModelSpec::draw_symbols`].
    pub fn new(spec: &ModelSpec, theta: &[f64]) -> Result<Self, SpecError> {
        let dims: Vec<usize> = (0..spec.n_draw_dims()).collect();
        Self::with_dims(spec, theta, &dims)
    }

    /// `dims[i]` is the position, inside the draw vectors that will be passed
    /// to [`MixingMap::realize`], of the spec's `i`-th draw symbol.
    pub fn with_dims(spec: &ModelSpec, theta: &[f64], dims: &[usize]) -> Result<Self, SpecError> {
        let params = spec.parameters();
        if theta.len() != params.len() {
            return Err(SpecError::DimensionMismatch { expected: params.len(), got: theta.len() });
        }
        if dims.len() != spec.n_draw_dims() {
            return Err(SpecError::DimensionMismatch { expected: spec.n_draw_dims(), got: dims.len() });
        }
        let n_coef = spec.coefficients.len();
        let mut rank = vec![usize::MAX; n_coef];
        for (r, c) in spec.random_coefficients().enumerate() {
            rank[c] = r;
        }
        let n_random = spec.random_coefficients().count();

        let mut map = MixingMap {
            base: vec![0.0; n_coef],
            transforms: spec.coefficients.iter().map(|c| c.transform).collect(),
            diag: Vec::new(),
            blocks: spec
                .blocks
                .iter()
                .map(|b| BlockMap {
                    coefs: b.members.clone(),
                    dims: b.members.iter().map(|&c| dims[rank[c]]).collect(),
                    chol: vec![0.0; b.members.len() * (b.members.len() + 1) / 2],
                })
                .collect(),
            error_components: spec
                .error_components
                .iter()
                .enumerate()
                .map(|(e, ec)| (ec.mode.slot(), dims[n_random + e], 0.0))
                .collect(),
            intercepts: spec
                .intercepts
                .iter()
                .map(|ic| InterceptMap {
                    mode_slot: ic.mode.slot(),
                    baseline: 0.0,
                    shifts: ic.covariates.iter().map(|&c| (c, 0.0)).collect(),
                })
                .collect(),
        };
        for (p, &v) in params.iter().zip(theta) {
            match p.role {
                ParamRole::Coefficient(c) => map.base[c] = v,
                ParamRole::Scale(c) => map.diag.push((c, dims[rank[c]], v)),
                ParamRole::Cholesky { block, row, col } => map.blocks[block].chol[row * (row + 1) / 2 + col] = v,
                ParamRole::ErrorScale(e) => map.error_components[e].2 = v,
                ParamRole::InterceptBaseline(k) => map.intercepts[k].baseline = v,
                ParamRole::InterceptShift(k, j) => map.intercepts[k].shifts[j].1 = v,
            }
        }
        Ok(map)
    }

    /// Mode intercepts for one respondent, by mode slot.
    pub fn intercepts_for(&self, respondent: &Respondent) -> [f64; 3] {
        let mut out = [0.0; 3];
        for ic in &self.intercepts {
            out[ic.mode_slot] = ic.baseline + ic.shifts.iter().map(|&(c, g)| g * respondent.covariate(c)).sum::<f64>();
        }
        out
    }

    /// `alpha = mu + S z`, `beta = psi(alpha)`, `eta_l = tau_l z_l`.
    pub fn realize(&self, z: &[f64], out: &mut Realization) {
        out.alpha.copy_from_slice(&self.base);
        for &(c, d, sd) in &self.diag {
            out.alpha[c] += sd * z[d];
        }
        for b in &self.blocks {
            let mut k = 0;
            for (i, &c) in b.coefs.iter().enumerate() {
                let mut acc = 0.0;
                for j in 0..=i {
                    acc += b.chol[k] * z[b.dims[j]];
                    k += 1;
                }
                out.alpha[c] += acc;
            }
        }
        out.saturated = 0;
        for ((beta, &alpha), t) in out.beta.iter_mut().zip(&out.alpha).zip(&self.transforms) {
            let (v, sat) = t.apply(alpha);
            *beta = v;
            out.saturated += sat as usize;
        }
        out.eta = [0.0; 3];
        for &(slot, d, tau) in &self.error_components {
            out.eta[slot] = tau * z[d];
        }
    }
}

/// Tastes and error components for one standard-normal draw vector `z`
/// ordered as [`ModelSpec::draw_symbols`].
pub fn realize_coefficients(spec: &ModelSpec, theta: &[f64], z: &[f64]) -> Result<Realization, SpecError> {
    if z.len() != spec.n_draw_dims() {
        return Err(SpecError::DimensionMismatch { expected: spec.n_draw_dims(), got: z.len() });
    }
    let map = MixingMap::new(spec, theta)?;
    let mut out = Realization::new(spec.coefficients.len());
    map.realize(z, &mut out);
    Ok(out)
}
