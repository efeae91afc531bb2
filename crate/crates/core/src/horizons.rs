use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HorizonGenerator {
    Geometric {
        tau0: f64,
        factor: f64,
        count: usize,
    },
    Arithmetic {
        tau0: f64,
        step: f64,
        count: usize,
    },
    Explicit {
        values: Vec<f64>,
    },
}

/// Strictly increasing positive horizons `τ₁ < τ₂ < …` (at least two).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonSequence {
    values: Vec<f64>,
    generator: HorizonGenerator,
}

impl HorizonSequence {
    pub fn new(generator: HorizonGenerator) -> Result<Self> {
        let values = match &generator {
            HorizonGenerator::Geometric {
                tau0,
                factor,
                count,
            } => {
                if !(*factor > 1.0) {
                    return Err(Error::Horizons(format!(
                        "geometric factor must exceed 1, got {factor}"
                    )));
                }
                (0..*count).map(|i| tau0 * factor.powi(i as i32)).collect()
            }
            HorizonGenerator::Arithmetic { tau0, step, count } => {
                (0..*count).map(|i| tau0 + step * i as f64).collect()
            }
            HorizonGenerator::Explicit { values } => values.clone(),
        };
        if values.len() < 2 {
            return Err(Error::Horizons(format!(
                "need at least 2 horizons, got {}",
                values.len()
            )));
        }
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Horizons(
                "horizons must be positive and finite".into(),
            ));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Horizons(
                "horizons must be strictly increasing".into(),
            ));
        }
        Ok(Self { values, generator })
    }

    pub fn geometric(tau0: f64, factor: f64, count: usize) -> Result<Self> {
        Self::new(HorizonGenerator::Geometric {
            tau0,
            factor,
            count,
        })
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        Self::new(HorizonGenerator::Explicit { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn generator(&self) -> &HorizonGenerator {
        &self.generator
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for HorizonSequence {
    /// `τ = 2, 4, …, 64`.
    fn default() -> Self {
        Self::geometric(2.0, 2.0, 6).unwrap()
    }
}
