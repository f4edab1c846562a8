use serde::{Deserialize, Serialize};

use crate::exact::{ceil_i64, clamp01, decimal, floor_i64, int, ratio, Rational};
use crate::{FanError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fairness {
    /// Equal acceptance rates.
    Dp,
    /// Equal true positive rates.
    Eop,
    /// Equal true positive and true negative rates.
    Eod,
}

impl Fairness {
    pub const ALL: [Fairness; 3] = [Fairness::Dp, Fairness::Eop, Fairness::Eod];

    pub fn name(&self) -> &'static str {
        match self {
            Fairness::Dp => "dp",
            Fairness::Eop => "eop",
            Fairness::Eod => "eod",
        }
    }
}

impl std::str::FromStr for Fairness {
    type Err = FanError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dp" => Ok(Fairness::Dp),
            "eop" => Ok(Fairness::Eop),
            "eod" => Ok(Fairness::Eod),
            other => Err(FanError::domain(format!(
                "unknown fairness notion `{other}` (expected dp, eop or eod)"
            ))),
        }
    }
}

/// Which samples the error floor counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonTrivialityScope {
    /// Every sample, using `pred xor f` for abstained ones too.
    #[default]
    AllSamples,
    /// Only non-abstained samples.
    Predicted,
}

/// Lower bound on each group's error count, `N_z * e_o`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonTriviality {
    /// Per-group optimal error rate; defaults to the baseline's.
    #[serde(default)]
    pub floors: Option<Vec<f64>>,
    #[serde(default)]
    pub scope: NonTrivialityScope,
}

/// Hyperparameters of the constrained program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub fairness: Fairness,
    pub epsilon: f64,
    /// Maximum abstention rate per group.
    pub delta: Vec<f64>,
    /// No-harm slack per group; may be negative.
    pub eta: Vec<f64>,
    /// Abstention-rate gap bound per label.
    #[serde(default)]
    pub sigma: [Option<f64>; 2],
    #[serde(default)]
    pub non_triviality: Option<NonTriviality>,
}

impl ConstraintSpec {
    /// Same `delta` and `eta` for every group, no optional constraints.
    pub fn uniform(fairness: Fairness, epsilon: f64, delta: f64, eta: f64, n_groups: usize) -> Self {
        Self {
            fairness,
            epsilon,
            delta: vec![delta; n_groups],
            eta: vec![eta; n_groups],
            sigma: [None, None],
            non_triviality: None,
        }
    }

    pub fn validate(&self, n_groups: usize) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(FanError::domain(format!("epsilon {} must be >= 0", self.epsilon)));
        }
        for (name, v) in [("delta", &self.delta), ("eta", &self.eta)] {
            if v.len() != n_groups {
                return Err(FanError::domain(format!(
                    "{name} has {} entries for {n_groups} groups",
                    v.len()
                )));
            }
        }
        if let Some(d) = self.delta.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(FanError::domain(format!("delta {d} is outside [0, 1]")));
        }
        if let Some(e) = self.eta.iter().find(|e| !e.is_finite()) {
            return Err(FanError::domain(format!("eta {e} is not finite")));
        }
        for s in self.sigma.iter().flatten() {
            if !(s.is_finite() && *s >= 0.0) {
                return Err(FanError::domain(format!("sigma {s} must be >= 0")));
            }
        }
        if let Some(nt) = &self.non_triviality {
            if let Some(floors) = &nt.floors {
                if floors.len() != n_groups {
                    return Err(FanError::domain(format!(
                        "non-triviality floors have {} entries for {n_groups} groups",
                        floors.len()
                    )));
                }
                if let Some(f) = floors.iter().find(|f| !(0.0..=1.0).contains(*f)) {
                    return Err(FanError::domain(format!("error floor {f} is outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    pub fn literal_non_triviality(&self) -> bool {
        matches!(
            &self.non_triviality,
            Some(NonTriviality {
                scope: NonTrivialityScope::AllSamples,
                ..
            })
        )
    }
}

/// Integer thresholds and exact bounds derived from a spec for a population
/// with the given group sizes and baseline error counts.
#[derive(Debug, Clone)]
pub(crate) struct Bounds {
    pub epsilon: Rational,
    /// `floor(delta_z * N_z)`.
    pub max_abstain: Vec<i64>,
    /// Clamped `(1 + eta_z) * e_z`.
    pub error_rate_cap: Vec<Rational>,
    pub sigma: [Option<Rational>; 2],
    /// `ceil(N_z * e_o)` when a floor is active.
    pub error_floor: Option<Vec<i64>>,
}

impl Bounds {
    pub fn new(spec: &ConstraintSpec, sizes: &[usize], baseline_errors: &[usize]) -> Result<Self> {
        spec.validate(sizes.len())?;
        let one = int(1);
        let mut max_abstain = Vec::new();
        let mut error_rate_cap = Vec::new();
        for (z, (&n, &e)) in sizes.iter().zip(baseline_errors).enumerate() {
            if n == 0 {
                return Err(FanError::domain(format!("group {z} has no samples")));
            }
            max_abstain.push(floor_i64(&(decimal(spec.delta[z])? * int(n as i64))));
            let factor = &one + decimal(spec.eta[z])?;
            error_rate_cap.push(clamp01(factor * ratio(e as u64, n as u64)));
        }
        let sigma = [
            spec.sigma[0].map(decimal).transpose()?,
            spec.sigma[1].map(decimal).transpose()?,
        ];
        let error_floor = match &spec.non_triviality {
            None => None,
            Some(nt) => Some(match &nt.floors {
                None => baseline_errors.iter().map(|&e| e as i64).collect(),
                Some(floors) => floors
                    .iter()
                    .zip(sizes)
                    .map(|(&f, &n)| Ok(ceil_i64(&(decimal(f)? * int(n as i64)))))
                    .collect::<Result<_>>()?,
            }),
        };
        Ok(Self {
            epsilon: decimal(spec.epsilon)?,
            max_abstain,
            error_rate_cap,
            sigma,
            error_floor,
        })
    }
}
