//! Mean value functions of the nine reliability growth models.
//!
//! Each model maps elapsed time `t` (days) to the expected cumulative number
//! of detected faults `m(t)`. Every function satisfies `m(0) = 0` and is
//! nondecreasing for parameters inside the model's domain.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Exponent arguments are clamped to this magnitude before `exp`.
pub const EXP_CLAMP: f64 = 700.0;

/// Lower bound of every fitted parameter.
pub const RATE_LOWER: f64 = 1e-9;
/// Upper bound of rate and shape parameters.
pub const RATE_UPPER: f64 = 1e3;
/// Lower bound of the asymptotic fault count `a`.
pub const SCALE_LOWER: f64 = 1e-6;

/// Identifier of a reliability growth model.
///
/// The derived ordering is lexicographic on the short code, which is the
/// order used for result lists and rank tie-breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelId {
    /// Duane
    DU,
    /// Goel-Okumoto
    GO,
    /// Goel-Okumoto S-shaped
    GOS,
    /// Hossain-Dahiya
    HD,
    /// Log-logistic
    LL,
    /// Musa-Okumoto
    MO,
    /// Weibull
    WE,
    /// Yamada exponential
    YE,
    /// Yamada Rayleigh
    YR,
}

impl ModelId {
    pub const ALL: [ModelId; 9] = [
        ModelId::DU,
        ModelId::GO,
        ModelId::GOS,
        ModelId::HD,
        ModelId::LL,
        ModelId::MO,
        ModelId::WE,
        ModelId::YE,
        ModelId::YR,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ModelId::DU => "DU",
            ModelId::GO => "GO",
            ModelId::GOS => "GOS",
            ModelId::HD => "HD",
            ModelId::LL => "LL",
            ModelId::MO => "MO",
            ModelId::WE => "WE",
            ModelId::YE => "YE",
            ModelId::YR => "YR",
        }
    }

    pub fn full_name(self) -> &'static str {
        match self {
            ModelId::DU => "Duane",
            ModelId::GO => "Goel-Okumoto",
            ModelId::GOS => "Goel-Okumoto S-Shaped",
            ModelId::HD => "Hossain-Dahiya",
            ModelId::LL => "Log-Logistic",
            ModelId::MO => "Musa-Okumoto",
            ModelId::WE => "Weibull",
            ModelId::YE => "Yamada Exponential",
            ModelId::YR => "Yamada Rayleigh",
        }
    }

    pub fn descriptor(self) -> ModelDescriptor {
        ModelDescriptor::of(self)
    }

    pub fn param_count(self) -> usize {
        self.descriptor().param_names.len()
    }

    /// Parses a comma separated list such as `"GO,LL,WE"`.
    pub fn parse_list(s: &str) -> Result<Vec<ModelId>, ModelError> {
        let mut ids = s
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<ModelId>, _>>()?;
        ids.sort();
        ids.dedup();
        Ok(ids)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ModelId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        ModelId::ALL
            .into_iter()
            .find(|id| id.code() == upper)
            .ok_or_else(|| ModelError::UnknownModel(s.to_string()))
    }
}

/// Shape class of a mean value function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShapeClass {
    Concave,
    SShaped,
    Infinite,
}

impl ShapeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeClass::Concave => "Concave",
            ShapeClass::SShaped => "S-Shaped",
            ShapeClass::Infinite => "Infinite",
        }
    }

    /// Concave and S-shaped models assume a finite total fault count.
    pub fn is_bounded(self) -> bool {
        !matches!(self, ShapeClass::Infinite)
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify(id: ModelId) -> ShapeClass {
    match id {
        ModelId::GO | ModelId::HD | ModelId::WE | ModelId::YE => ShapeClass::Concave,
        ModelId::GOS | ModelId::YR | ModelId::LL => ShapeClass::SShaped,
        ModelId::MO | ModelId::DU => ShapeClass::Infinite,
    }
}

/// How a parameter's search interval is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    /// Fault-count scale, anchored to the series length.
    Scale,
    /// Rate or shape parameter, scale free.
    Rate,
}

/// Static description of a model: shape, parameter names and domains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelDescriptor {
    pub id: ModelId,
    pub shape: ShapeClass,
    pub param_names: &'static [&'static str],
    pub param_kinds: &'static [ParamKind],
}

impl ModelDescriptor {
    pub fn of(id: ModelId) -> Self {
        use ParamKind::{Rate, Scale};
        let (param_names, param_kinds): (&'static [&'static str], &'static [ParamKind]) = match id {
            ModelId::GO | ModelId::GOS => (&["a", "b"], &[Scale, Rate]),
            ModelId::HD | ModelId::WE => (&["a", "b", "c"], &[Scale, Rate, Rate]),
            // r and alpha only ever appear as the product r*alpha.
            ModelId::YE | ModelId::YR => (&["a", "r*alpha", "beta"], &[Scale, Rate, Rate]),
            ModelId::MO | ModelId::DU => (&["alpha", "beta"], &[Scale, Rate]),
            ModelId::LL => (&["a", "lambda", "kappa"], &[Scale, Rate, Rate]),
        };
        ModelDescriptor {
            id,
            shape: classify(id),
            param_names,
            param_kinds,
        }
    }

    /// Search box `(lower, upper]` for each parameter on a series of `n` points.
    pub fn bounds(&self, n: usize) -> Vec<(f64, f64)> {
        let scale_upper = (100.0 * n.max(1) as f64).max(RATE_UPPER);
        self.param_kinds
            .iter()
            .map(|kind| match kind {
                ParamKind::Scale if matches!(self.id, ModelId::MO | ModelId::DU) => {
                    (RATE_LOWER, scale_upper)
                }
                ParamKind::Scale => (SCALE_LOWER, 100.0 * n.max(1) as f64),
                ParamKind::Rate => (RATE_LOWER, RATE_UPPER),
            })
            .collect()
    }

    /// Checks arity and the mathematical domain of each parameter.
    ///
    /// The domain is wider than the search box: every parameter must be
    /// finite and positive, except the Hossain-Dahiya `c`, which may be zero.
    pub fn validate(&self, p: &[f64]) -> Result<(), ModelError> {
        if p.len() != self.param_names.len() {
            return Err(ModelError::Arity {
                model: self.id,
                expected: self.param_names.len(),
                got: p.len(),
            });
        }
        for (i, &v) in p.iter().enumerate() {
            let zero_ok = self.id == ModelId::HD && i == 2;
            let ok = v.is_finite() && (v > 0.0 || (zero_ok && v == 0.0));
            if !ok {
                return Err(ModelError::Domain {
                    model: self.id,
                    param: self.param_names[i],
                    value: v,
                });
            }
        }
        Ok(())
    }
}

/// Parameter values aligned with a descriptor's `param_names`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    model: ModelId,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(model: ModelId, values: Vec<f64>) -> Result<Self, ModelError> {
        model.descriptor().validate(&values)?;
        Ok(ParamVector { model, values })
    }

    pub(crate) fn new_unchecked(model: ModelId, values: Vec<f64>) -> Self {
        ParamVector { model, values }
    }

    pub fn model(&self) -> ModelId {
        self.model
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let d = self.model.descriptor();
        d.param_names
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }
}

#[inline]
fn exp_clamped(x: f64) -> f64 {
    x.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

/// `1 - exp(-x)` without cancellation for small `x`.
#[inline]
fn one_minus_exp_neg(x: f64) -> f64 {
    -(-x.clamp(-EXP_CLAMP, EXP_CLAMP)).exp_m1()
}

/// `t^p` evaluated as `exp(p ln t)`, with `0^p = 0`.
#[inline]
fn pow_pos(t: f64, p: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        exp_clamped(p * t.ln())
    }
}

/// Evaluates `m(t)` without validating the parameters.
pub(crate) fn eval(id: ModelId, p: &[f64], t: f64) -> f64 {
    match id {
        ModelId::GO => p[0] * one_minus_exp_neg(p[1] * t),
        ModelId::GOS => {
            let bt = p[1] * t;
            // 1 - (1 + x) e^-x = sum_{k>=2} (-1)^k (k-1) x^k / k!; the direct
            // form cancels badly below x ~ 0.5.
            let tail = if bt < 0.5 {
                let mut term = bt * bt / 2.0; // x^k / k! at k = 2
                let mut sum = term;
                let mut k = 2.0;
                while term > 1e-17 * sum {
                    k += 1.0;
                    term *= bt / k;
                    let signed = if (k as u64).is_multiple_of(2) { term } else { -term };
                    sum += (k - 1.0) * signed;
                }
                sum
            } else {
                1.0 - (1.0 + bt) * exp_clamped(-bt)
            };
            p[0] * tail
        }
        ModelId::HD => {
            let e = exp_clamped(-p[1] * t);
            p[0] * one_minus_exp_neg(p[1] * t) / (1.0 + p[2] * e)
        }
        ModelId::MO => p[0] * (p[1] * t).ln_1p(),
        ModelId::DU => p[0] * pow_pos(t, p[1]),
        ModelId::WE => p[0] * one_minus_exp_neg(p[1] * pow_pos(t, p[2])),
        ModelId::YE => {
            let inner = one_minus_exp_neg(p[2] * t);
            p[0] * one_minus_exp_neg(p[1] * inner)
        }
        ModelId::YR => {
            let inner = one_minus_exp_neg(p[2] * t * t / 2.0);
            p[0] * one_minus_exp_neg(p[1] * inner)
        }
        ModelId::LL => {
            let u = pow_pos(p[1] * t, p[2]);
            p[0] * u / (1.0 + u)
        }
    }
}

/// Writes `dm/dp_i` into `out` without validating the parameters.
pub(crate) fn eval_gradient(id: ModelId, p: &[f64], t: f64, out: &mut [f64]) {
    match id {
        ModelId::GO => {
            let e = exp_clamped(-p[1] * t);
            out[0] = one_minus_exp_neg(p[1] * t);
            out[1] = p[0] * t * e;
        }
        ModelId::GOS => {
            let (a, b) = (p[0], p[1]);
            let e = exp_clamped(-b * t);
            out[0] = eval(id, &[1.0, b], t);
            out[1] = a * b * t * t * e;
        }
        ModelId::HD => {
            let (a, b, c) = (p[0], p[1], p[2]);
            let e = exp_clamped(-b * t);
            let num = one_minus_exp_neg(b * t);
            let den = 1.0 + c * e;
            out[0] = num / den;
            out[1] = a * t * e * (1.0 + c) / (den * den);
            out[2] = -a * num * e / (den * den);
        }
        ModelId::MO => {
            let (alpha, beta) = (p[0], p[1]);
            out[0] = (beta * t).ln_1p();
            out[1] = alpha * t / (beta * t + 1.0);
        }
        ModelId::DU => {
            let (alpha, beta) = (p[0], p[1]);
            let tb = pow_pos(t, beta);
            out[0] = tb;
            out[1] = if t > 0.0 { alpha * tb * t.ln() } else { 0.0 };
        }
        ModelId::WE => {
            let (a, b, c) = (p[0], p[1], p[2]);
            let tc = pow_pos(t, c);
            let e = exp_clamped(-b * tc);
            out[0] = one_minus_exp_neg(b * tc);
            out[1] = a * tc * e;
            out[2] = if t > 0.0 { a * b * tc * t.ln() * e } else { 0.0 };
        }
        ModelId::YE | ModelId::YR => {
            let (a, ra, beta) = (p[0], p[1], p[2]);
            // Inner exponent argument and its derivative with respect to beta.
            let (x, dx) = if id == ModelId::YE {
                (beta * t, t)
            } else {
                (beta * t * t / 2.0, t * t / 2.0)
            };
            let f = exp_clamped(-x);
            let inner = one_minus_exp_neg(x);
            let g = exp_clamped(-ra * inner);
            out[0] = one_minus_exp_neg(ra * inner);
            out[1] = a * inner * g;
            out[2] = a * g * ra * dx * f;
        }
        ModelId::LL => {
            let (a, lambda, kappa) = (p[0], p[1], p[2]);
            let lt = lambda * t;
            let u = pow_pos(lt, kappa);
            let den = 1.0 + u;
            let dm_du = a / (den * den);
            out[0] = u / den;
            if lt > 0.0 {
                out[1] = dm_du * kappa * u / lambda;
                out[2] = dm_du * u * lt.ln();
            } else {
                out[1] = 0.0;
                out[2] = 0.0;
            }
        }
    }
}

/// Expected cumulative fault count at time `t`.
pub fn mean_value(id: ModelId, p: &[f64], t: f64) -> Result<f64, ModelError> {
    id.descriptor().validate(p)?;
    check_time(t)?;
    Ok(eval(id, p, t))
}

/// Analytic partial derivatives of `m(t)` in `param_names` order.
pub fn gradient(id: ModelId, p: &[f64], t: f64) -> Result<Vec<f64>, ModelError> {
    id.descriptor().validate(p)?;
    check_time(t)?;
    let mut out = vec![0.0; p.len()];
    eval_gradient(id, p, t, &mut out);
    Ok(out)
}

fn check_time(t: f64) -> Result<(), ModelError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Time(t))
    }
}
