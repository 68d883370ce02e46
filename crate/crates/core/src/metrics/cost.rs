//! Per-image pricing scaled up to classroom and school deployments.

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetryModel {
    /// Every failed image is regenerated once: multiplier `1 + r`.
    SingleRetry,
    /// Regenerate until success: expected attempts `1 / (1 - r)`.
    #[default]
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error("regeneration rate must lie in [0, 1), got {0}")]
    InvalidRegenRate(Decimal),
    #[error("per-image cost must be non-negative, got {0}")]
    NegativeCost(Decimal),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostScenario {
    pub name: String,
    pub per_image: Decimal,
    pub diagrams_per_deck: u32,
    pub decks_per_week: u32,
    pub weeks_per_year: u32,
    pub teachers: u32,
    /// Fraction of images that need regeneration.
    #[serde(default)]
    pub regen_rate: Decimal,
    #[serde(default)]
    pub retry_model: RetryModel,
}

impl CostScenario {
    /// 12 diagrams per deck, one deck a week for 40 weeks, 50 teachers,
    /// no regeneration.
    pub fn classroom(name: impl Into<String>, per_image: Decimal) -> Self {
        Self {
            name: name.into(),
            per_image,
            diagrams_per_deck: 12,
            decks_per_week: 1,
            weeks_per_year: 40,
            teachers: 50,
            regen_rate: Decimal::ZERO,
            retry_model: RetryModel::Geometric,
        }
    }

    pub fn with_regen(mut self, rate: Decimal, model: RetryModel) -> Self {
        self.regen_rate = rate;
        self.retry_model = model;
        self
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if self.regen_rate < Decimal::ZERO || self.regen_rate >= Decimal::ONE {
            return Err(CostError::InvalidRegenRate(self.regen_rate));
        }
        if self.per_image < Decimal::ZERO {
            return Err(CostError::NegativeCost(self.per_image));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub multiplier: Decimal,
    pub per_image_eff: Decimal,
    pub per_deck: Decimal,
    pub per_teacher_year: Decimal,
    pub per_school_year: Decimal,
}

pub fn effective_cost(s: &CostScenario) -> Result<CostBreakdown, CostError> {
    s.validate()?;
    let multiplier = match s.retry_model {
        RetryModel::SingleRetry => Decimal::ONE + s.regen_rate,
        RetryModel::Geometric => Decimal::ONE / (Decimal::ONE - s.regen_rate),
    };
    let per_image_eff = s.per_image * multiplier;
    let per_deck = per_image_eff * Decimal::from(s.diagrams_per_deck);
    let per_teacher_year = per_deck * Decimal::from(s.decks_per_week) * Decimal::from(s.weeks_per_year);
    let per_school_year = per_teacher_year * Decimal::from(s.teachers);
    Ok(CostBreakdown {
        multiplier,
        per_image_eff,
        per_deck,
        per_teacher_year,
        per_school_year,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rust_decimal::prelude::ToPrimitive;
    use std::str::FromStr;

    fn d(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    #[test]
    fn zero_regen_is_identity_multiplier() {
        for model in [RetryModel::SingleRetry, RetryModel::Geometric] {
            let s = CostScenario::classroom("x", d("0.04")).with_regen(Decimal::ZERO, model);
            assert_eq!(effective_cost(&s).unwrap().multiplier, Decimal::ONE);
        }
    }

    #[test]
    fn single_retry() {
        let s = CostScenario::classroom("x", d("0.04")).with_regen(d("0.3"), RetryModel::SingleRetry);
        let b = effective_cost(&s).unwrap();
        assert_eq!(b.multiplier, d("1.3"));
        assert_eq!(b.per_deck, d("0.624"));
    }

    #[test]
    fn geometric() {
        let s = CostScenario::classroom("x", d("0.04")).with_regen(d("0.30"), RetryModel::Geometric);
        let m = effective_cost(&s).unwrap().multiplier.to_f64().unwrap();
        assert!((m - 1.0 / 0.7).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rates() {
        let s = CostScenario::classroom("x", d("0.04")).with_regen(Decimal::ONE, RetryModel::Geometric);
        assert!(effective_cost(&s).is_err());
        let s = CostScenario::classroom("x", d("0.04")).with_regen(d("-0.1"), RetryModel::Geometric);
        assert!(effective_cost(&s).is_err());
    }

    #[test]
    fn linear_in_price_and_teachers() {
        let base = effective_cost(&CostScenario::classroom("x", d("0.05"))).unwrap();
        let double = effective_cost(&CostScenario::classroom("x", d("0.10"))).unwrap();
        assert_eq!(double.per_school_year, base.per_school_year * Decimal::TWO);
        let mut more = CostScenario::classroom("x", d("0.05"));
        more.teachers = 150;
        assert_eq!(effective_cost(&more).unwrap().per_school_year, base.per_school_year * Decimal::from(3));
    }
}
