//! Ordinal weekly household income bands and their continuous encoding.
//!
//! Twelve bands; the four reporting groups 0-799, 800-1,599, 1,600-2,499 and
//! 2,500+ AUD/week are unions of whole bands. Bounded bands encode to their
//! midpoint, the open top band is top-coded at 1.3 times its lower edge.

use serde::{Deserialize, Serialize};

use super::DatasetError;

pub const TOP_CODE_FACTOR: f64 = 1.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IncomeBand {
    /// `[lower, upper)` in AUD/week.
    Bounded { lower: f64, upper: f64 },
    /// `lower` or more.
    Open { lower: f64 },
}

impl IncomeBand {
    pub fn midpoint(self) -> f64 {
        match self {
            IncomeBand::Bounded { lower, upper } => 0.5 * (lower + upper),
            IncomeBand::Open { lower } => TOP_CODE_FACTOR * lower,
        }
    }

    pub fn label(self) -> String {
        match self {
            IncomeBand::Bounded { lower, upper } => format!("{lower}-{}", upper - 1.0),
            IncomeBand::Open { lower } => format!("{lower} or more"),
        }
    }

    pub fn contains(self, income: f64) -> bool {
        match self {
            IncomeBand::Bounded { lower, upper } => income >= lower && income < upper,
            IncomeBand::Open { lower } => income >= lower,
        }
    }
}

const BANDS: [IncomeBand; 12] = [
    IncomeBand::Bounded { lower: 0.0, upper: 200.0 },
    IncomeBand::Bounded { lower: 200.0, upper: 400.0 },
    IncomeBand::Bounded { lower: 400.0, upper: 600.0 },
    IncomeBand::Bounded { lower: 600.0, upper: 800.0 },
    IncomeBand::Bounded { lower: 800.0, upper: 1600.0 },
    IncomeBand::Bounded { lower: 1600.0, upper: 1800.0 },
    IncomeBand::Bounded { lower: 1800.0, upper: 2000.0 },
    IncomeBand::Bounded { lower: 2000.0, upper: 2250.0 },
    IncomeBand::Bounded { lower: 2250.0, upper: 2500.0 },
    IncomeBand::Bounded { lower: 2500.0, upper: 3000.0 },
    IncomeBand::Bounded { lower: 3000.0, upper: 4000.0 },
    IncomeBand::Open { lower: 4000.0 },
];

/// The twelve survey bands, ordered; band code `i` is `table[i - 1]`.
pub fn income_band_table() -> &'static [IncomeBand; 12] {
    &BANDS
}

/// Encodes a one-based band code to AUD/week.
pub fn encode_income(band: u8) -> Result<f64, DatasetError> {
    band.checked_sub(1)
        .and_then(|i| BANDS.get(i as usize))
        .map(|b| b.midpoint())
        .ok_or_else(|| DatasetError::UnknownBand(band.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_rule_and_top_code() {
        assert_eq!(IncomeBand::Bounded { lower: 800.0, upper: 1600.0 }.midpoint(), 1200.0);
        assert_eq!(encode_income(5).unwrap(), 1200.0);
        assert_eq!(encode_income(12).unwrap(), 5200.0);
        assert_eq!(IncomeBand::Bounded { lower: 950.0, upper: 950.0 }.midpoint(), 950.0);
    }

    #[test]
    fn unknown_codes_are_rejected() {
        assert_eq!(encode_income(0), Err(DatasetError::UnknownBand("0".into())));
        assert!(encode_income(13).is_err());
    }

    #[test]
    fn encoding_is_monotone_and_bounded() {
        let enc: Vec<f64> = (1..=12).map(|b| encode_income(b).unwrap()).collect();
        assert!(enc.windows(2).all(|w| w[0] < w[1]));
        assert!(enc.iter().all(|&v| v > 0.0 && v <= 5200.0));
    }

    #[test]
    fn bands_tile_the_reporting_groups() {
        // Each reporting-group edge is a band edge.
        for edge in [800.0, 1600.0, 2500.0] {
            assert!(BANDS.iter().any(|b| matches!(b, IncomeBand::Bounded { lower, .. } if *lower == edge)));
        }
        for w in BANDS.windows(2) {
            if let (IncomeBand::Bounded { upper, .. }, IncomeBand::Bounded { lower, .. } | IncomeBand::Open { lower }) =
                (w[0], w[1])
            {
                assert_eq!(upper, lower);
            }
        }
        for (i, b) in BANDS.iter().enumerate() {
            assert!(b.contains(b.midpoint()) || i == 11);
        }
    }
}
