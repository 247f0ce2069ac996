//! Identifiability of contextualized linear models: the counting heuristic
//! `n > d_g · d_s` and an empirical rank check for linear varying-coefficient
//! designs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::linalg::numerical_rank;

/// Encoder classes the heuristic is asked about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderClass {
    Population,
    LinearVc,
    Mlp,
    Ngam,
}

impl FromStr for EncoderClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "population" => Ok(Self::Population),
            "linear_vc" | "linear" => Ok(Self::LinearVc),
            "mlp" => Ok(Self::Mlp),
            "ngam" => Ok(Self::Ngam),
            other => Err(Error::Config(format!(
                "unknown encoder class `{other}` (expected population, linear_vc, mlp or ngam)"
            ))),
        }
    }
}

impl fmt::Display for EncoderClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Population => "population",
            Self::LinearVc => "linear_vc",
            Self::Mlp => "mlp",
            Self::Ngam => "ngam",
        })
    }
}

pub const CONVENTION: &str =
    "p counts coefficients only; the offset is absorbed as a ones column, so each solution space has d_s = p - 1 free dimensions";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub encoder_class: EncoderClass,
    pub d_g: usize,
    pub d_s: usize,
    pub threshold: usize,
    /// Advisory: `n > threshold`.
    pub heuristic_identifiable: bool,
    pub empirical_rank: Option<usize>,
    pub empirical_identifiable: Option<bool>,
    pub convention: String,
}

/// Evaluates `n > d_g · d_s` for the population or linear VC encoder class.
pub fn heuristic_check(n: usize, m: usize, p: usize, class: EncoderClass) -> Result<IdentifiabilityReport> {
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::Config(format!("n, m and p must all be >= 1 (got n={n}, m={m}, p={p})")));
    }
    let d_g = match class {
        EncoderClass::Population => 1,
        EncoderClass::LinearVc => m,
        EncoderClass::Mlp | EncoderClass::Ngam => {
            return Err(Error::Unsupported(format!(
                "no redundancy degree d_g is defined for the {class} encoder class; \
                 the heuristic covers only population and linear_vc encoders"
            )))
        }
    };
    let d_s = p - 1;
    let threshold = d_g * d_s;
    Ok(IdentifiabilityReport {
        n,
        m,
        p,
        encoder_class: class,
        d_g,
        d_s,
        threshold,
        heuristic_identifiable: n > threshold,
        empirical_rank: None,
        empirical_identifiable: None,
        convention: CONVENTION.into(),
    })
}

/// The n × (m·p) design whose row `i` is `vec(x_i c_iᵀ)`: entry `j·m + k` is `x_ij · c_ik`.
pub fn kronecker_design(context: &Matrix, predictors: &Matrix) -> Result<Matrix> {
    if context.rows() != predictors.rows() {
        return Err(Error::Data(format!(
            "{} context rows but {} predictor rows",
            context.rows(),
            predictors.rows()
        )));
    }
    let (m, p) = (context.cols(), predictors.cols());
    Ok(Matrix::from_fn(context.rows(), m * p, |i, col| {
        predictors.get(i, col / m) * context.get(i, col % m)
    }))
}

/// Numerical rank of the linear VC design and whether β is uniquely determined.
pub fn rank_check(context: &Matrix, predictors: &Matrix) -> Result<(usize, bool)> {
    let design = kronecker_design(context, predictors)?;
    let rank = numerical_rank(&design);
    Ok((rank, rank == design.cols()))
}

impl IdentifiabilityReport {
    pub fn with_rank_check(mut self, context: &Matrix, predictors: &Matrix) -> Result<Self> {
        let (rank, ok) = rank_check(context, predictors)?;
        self.empirical_rank = Some(rank);
        self.empirical_identifiable = Some(ok);
        Ok(self)
    }
}
