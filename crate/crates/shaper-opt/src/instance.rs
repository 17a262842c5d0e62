//! Concrete shaper design instance: quadratic objective, linear
//! step-response and unit-gain constraints, nonsmooth stability
//! constraint, starting-point generators and the instance file format.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::problem::{ConstraintFn, EvalError, Evaluation, Problem};
use crate::spectrum::{stability_constraint, DelaySystem, SpectrumConfig, SpectrumError};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("invalid instance field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("instance file parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("H matrix is not positive definite")]
    NotPositiveDefinite,
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

fn invalid(field: &str, message: impl Into<String>) -> InstanceError {
    InstanceError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// Shaper geometry: n equally spaced delays on [0, T] and the gain
/// parameter gamma.
#[derive(Debug, Clone, PartialEq)]
pub struct ShaperSpec {
    pub n: usize,
    pub horizon: f64,
    pub gamma: f64,
}

impl ShaperSpec {
    pub fn new(n: usize, horizon: f64, gamma: f64) -> Result<Self, InstanceError> {
        if n < 2 {
            return Err(invalid("n", "need at least two delays"));
        }
        if horizon <= 0.0 {
            return Err(invalid("T", "longest delay must be positive"));
        }
        if gamma <= 0.0 || gamma >= 1.0 {
            return Err(invalid("gamma", "gain must lie in (0, 1)"));
        }
        Ok(ShaperSpec { n, horizon, gamma })
    }

    /// Equally spaced delays with tau_1 = 0 and tau_n = T.
    pub fn delays(&self) -> Vec<f64> {
        let step = self.horizon / (self.n - 1) as f64;
        (0..self.n).map(|k| k as f64 * step).collect()
    }

    pub fn delay_system(&self) -> DelaySystem {
        DelaySystem::new(self.delays(), self.gamma).expect("validated spec")
    }
}

/// A full optimization instance of the stable-shaper design problem.
#[derive(Debug, Clone)]
pub struct ShaperInstance {
    pub spec: ShaperSpec,
    pub h: DMatrix<f64>,
    pub r_nom: f64,
    pub alpha_c: f64,
    pub spectrum: SpectrumConfig,
}

impl ShaperInstance {
    pub fn validate(&self) -> Result<(), InstanceError> {
        let n = self.spec.n;
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(invalid("H", format!("must be {n}x{n}")));
        }
        let asym = (&self.h - self.h.transpose()).amax();
        if asym > 1e-12 * (1.0 + self.h.amax()) {
            return Err(invalid("H", "must be symmetric"));
        }
        if self.h.clone().cholesky().is_none() {
            return Err(InstanceError::NotPositiveDefinite);
        }
        if self.r_nom <= 0.0 {
            return Err(invalid("R_nom", "must be positive"));
        }
        if self.alpha_c > 0.0 {
            return Err(invalid("alpha_c", "must be nonpositive"));
        }
        Ok(())
    }
}

/// Builds the constrained Problem:
/// objective x'Hx/R^2; n-1 partial-sum inequalities; the stability
/// inequality (flagged nonsmooth); equalities sum(x) = 0 and
/// gamma - sum(x_k tau_k) - 1 = 0.
pub fn build_problem(inst: &ShaperInstance) -> Result<Problem, InstanceError> {
    inst.validate()?;
    let n = inst.spec.n;
    let taus = inst.spec.delays();
    let sys = Arc::new(inst.spec.delay_system());
    let h = Arc::new(inst.h.clone());
    let r2 = inst.r_nom * inst.r_nom;
    let alpha_c = inst.alpha_c;
    let spectrum = Arc::new(inst.spectrum.clone());

    let h_obj = Arc::clone(&h);
    let objective: Box<crate::problem::ScalarEval> = Box::new(move |x: &DVector<f64>| {
        let hx = &*h_obj * x;
        Ok(Evaluation {
            value: x.dot(&hx) / r2,
            gradient: hx * (2.0 / r2),
        })
    });

    let mut inequalities = Vec::with_capacity(n);
    for l in 1..n {
        inequalities.push(ConstraintFn::smooth(Box::new(move |x: &DVector<f64>| {
            let value = -x.rows(0, l).sum();
            let mut gradient = DVector::zeros(x.len());
            for k in 0..l {
                gradient[k] = -1.0;
            }
            Ok(Evaluation { value, gradient })
        })));
    }
    let stab_sys = Arc::clone(&sys);
    let stab_cfg = Arc::clone(&spectrum);
    inequalities.push(ConstraintFn::nonsmooth(Box::new(move |x: &DVector<f64>| {
        match stability_constraint(&stab_sys, x.as_slice(), alpha_c, &stab_cfg) {
            Ok((value, grad)) => Ok(Evaluation {
                value,
                gradient: DVector::from_vec(grad),
            }),
            Err(SpectrumError::GradientUnavailable(d)) => Err(EvalError::GradientUnavailable(
                format!("defective rightmost root, |f'| = {d:.3e}"),
            )),
            Err(e) => Err(EvalError::Failed(e.to_string())),
        }
    })));

    let gamma = inst.spec.gamma;
    let equalities = vec![
        ConstraintFn::smooth(Box::new(move |x: &DVector<f64>| {
            Ok(Evaluation {
                value: x.sum(),
                gradient: DVector::from_element(x.len(), 1.0),
            })
        })),
        ConstraintFn::smooth(Box::new(move |x: &DVector<f64>| {
            let value = gamma - x.iter().zip(&taus).map(|(xi, ti)| xi * ti).sum::<f64>() - 1.0;
            Ok(Evaluation {
                value,
                gradient: DVector::from_iterator(x.len(), taus.iter().map(|&t| -t)),
            })
        })),
    ];

    Ok(Problem {
        dim: n,
        objective,
        objective_nonsmooth: false,
        inequalities,
        equalities,
    })
}

/// Which family of random starting points to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartKind {
    /// i.i.d. standard normal coordinates.
    Randn,
    /// Points satisfying all partial-sum inequalities and the first
    /// equality by construction.
    Lc,
}

impl StartKind {
    pub fn label(&self) -> &'static str {
        match self {
            StartKind::Randn => "randn",
            StartKind::Lc => "lc",
        }
    }
}

impl std::str::FromStr for StartKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "randn" => Ok(StartKind::Randn),
            "lc" => Ok(StartKind::Lc),
            other => Err(format!("unknown start kind `{other}` (expected randn or lc)")),
        }
    }
}

/// Uniform scale c of the LC partial sums p_l ~ U[0, c].
pub const LC_SCALE: f64 = 1.0;

/// Draws `count` starting points of the given kind, reproducibly from
/// the seed.
pub fn generate_starts(kind: StartKind, n: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| match kind {
            StartKind::Randn => {
                DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
            }
            StartKind::Lc => {
                // Partial sums p_l ~ U[0, c]; differencing gives prefix
                // sums p_l >= 0 for l < n and a zero total sum.
                let p: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.0..LC_SCALE)).collect();
                let mut x = DVector::zeros(n);
                x[0] = p[0];
                for k in 1..n - 1 {
                    x[k] = p[k] - p[k - 1];
                }
                x[n - 1] = -p[n - 2];
                x
            }
        })
        .collect()
}

///// Stand-in residual-vibration quadrature for H:
/// `H = (T/M) * sum_m Re(g(w_m) g(w_m)^*)` with `g_k(w) = e^{-i w tau_k} / (i w)`
/// over an M-point grid on the band, symmetrized and ridge-regularized.
pub fn default_h(
    spec: &ShaperSpec,
    omega_lo: f64,
    omega_hi: f64,
    grid: usize,
) -> Result<(DMatrix<f64>, f64), InstanceError> {
    if !(0.0 < omega_lo && omega_lo < omega_hi) {
        return Err(invalid("default_H", "need 0 < omega_lo < omega_hi"));
    }
    if grid < spec.n {
        return Err(invalid("default_H", "grid must have at least n points"));
    }
    let taus = spec.delays();
    let n = spec.n;
    let dw = (omega_hi - omega_lo) / grid as f64;
    let mut h = DMatrix::zeros(n, n);
    for m in 0..grid {
        let w = omega_lo + (m as f64 + 0.5) * dw;
        for j in 0..n {
            for k in 0..n {
                // Re(g_j conj(g_k)) = cos(w (tau_j - tau_k)) / w^2
                h[(j, k)] += (w * (taus[j] - taus[k])).cos() / (w * w);
            }
        }
    }
    h *= spec.horizon / grid as f64;
    let sym = (&h + h.transpose()) * 0.5;
    let ridge = 1e-10 * sym.trace() / n as f64;
    let h = sym + DMatrix::identity(n, n) * ridge;
    if h.clone().cholesky().is_none() {
        return Err(InstanceError::NotPositiveDefinite);
    }
    Ok((h, 1.0))
}

/// On-disk instance description.
///
/// ```json
/// {
///   "n": 18, "T": 0.8, "gamma": 0.01, "alpha_c": -0.1, "R_nom": 1.0,
///   "H": [ ... n*n row-major entries ... ]
/// }
/// ```
///
/// `H` may instead be a directive
/// `{"default_H": {"omega_lo": 3.0, "omega_hi": 9.0, "grid": 256}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub gamma: f64,
    pub alpha_c: f64,
    #[serde(rename = "R_nom")]
    pub r_nom: f64,
    #[serde(rename = "H")]
    pub h: HSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HSpec {
    /// Row-major n*n entries.
    Matrix(Vec<f64>),
    Directive {
        #[serde(rename = "default_H")]
        default_h: DefaultHParams,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefaultHParams {
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub grid: usize,
}

impl InstanceFile {
    pub fn from_json(s: &str) -> Result<Self, InstanceError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization cannot fail")
    }

    pub fn build(&self) -> Result<ShaperInstance, InstanceError> {
        let spec = ShaperSpec::new(self.n, self.horizon, self.gamma)?;
        let h = match &self.h {
            HSpec::Matrix(entries) => {
                if entries.len() != self.n * self.n {
                    return Err(invalid(
                        "H",
                        format!("expected {} entries, found {}", self.n * self.n, entries.len()),
                    ));
                }
                DMatrix::from_row_slice(self.n, self.n, entries)
            }
            HSpec::Directive { default_h: params } => {
                default_h(&spec, params.omega_lo, params.omega_hi, params.grid)?.0
            }
        };
        let inst = ShaperInstance {
            spec,
            h,
            r_nom: self.r_nom,
            alpha_c: self.alpha_c,
            spectrum: SpectrumConfig::default(),
        };
        inst.validate()?;
        Ok(inst)
    }
}

/// Content digest of an instance file, embedded into run histories so
/// downstream profile commands can verify they aggregate runs of the
/// same problem.
pub fn instance_digest(contents: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(contents.as_bytes());
    hex::encode(hasher.finalize())
}

/// The experimental instance: 18 equally spaced delays, T = 0.8,
/// gamma = 0.01, alpha_c = -0.1, with the stand-in H over a band around
/// the unit oscillatory mode.
pub fn paper_instance_file() -> InstanceFile {
    InstanceFile {
        n: 18,
        horizon: 0.8,
        gamma: 0.01,
        alpha_c: -0.1,
        r_nom: 1.0,
        h: HSpec::Directive {
            default_h: DefaultHParams {
                omega_lo: 4.0,
                omega_hi: 12.0,
                grid: 256,
            },
        },
        seed: None,
    }
}
