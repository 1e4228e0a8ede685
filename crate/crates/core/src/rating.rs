//! Rating grades and the rating-indexed parameter schemes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Broad {
    A,
    Bbb,
    Bb,
    B,
}

impl Broad {
    pub const ALL: [Broad; 4] = [Broad::A, Broad::Bbb, Broad::Bb, Broad::B];

    pub fn index(self) -> usize {
        self as usize
    }

    fn from_index(i: isize) -> Option<Broad> {
        usize::try_from(i).ok().and_then(|i| Broad::ALL.get(i).copied())
    }

    /// Next better broad grade, if any.
    pub fn above(self) -> Option<Broad> {
        Broad::from_index(self.index() as isize - 1)
    }

    /// Next worse broad grade, if any.
    pub fn below(self) -> Option<Broad> {
        Broad::from_index(self.index() as isize + 1)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Broad::A => "A",
            Broad::Bbb => "BBB",
            Broad::Bb => "BB",
            Broad::B => "B",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modifier {
    Plus,
    Flat,
    Minus,
}

/// Broad rating plus modifier. Ordered from best (`A+`) to worst (`B-`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RatingGrade {
    broad: Broad,
    modifier: Modifier,
}

/// Weight of each modifier step between adjacent broad grades.
pub const NOTCH_WEIGHT: f64 = 1.0 / 3.0;

impl RatingGrade {
    pub const fn new(broad: Broad, modifier: Modifier) -> Self {
        Self { broad, modifier }
    }

    pub const fn broad_grade(broad: Broad) -> Self {
        Self::new(broad, Modifier::Flat)
    }

    pub fn broad(&self) -> Broad {
        self.broad
    }

    pub fn modifier(&self) -> Modifier {
        self.modifier
    }

    pub fn is_broad(&self) -> bool {
        self.modifier == Modifier::Flat
    }

    /// 0 for `A+` up to 11 for `B-`; three notches per broad grade.
    pub fn notch(&self) -> usize {
        self.broad.index() * 3 + self.modifier as usize
    }

    pub fn from_notch(n: usize) -> Option<Self> {
        let broad = *Broad::ALL.get(n / 3)?;
        let modifier = [Modifier::Plus, Modifier::Flat, Modifier::Minus][n % 3];
        Some(Self::new(broad, modifier))
    }

    pub fn all() -> impl Iterator<Item = RatingGrade> {
        (0..12).filter_map(RatingGrade::from_notch)
    }

    /// Notch-linear mixing weights over broad grades.
    ///
    /// `BBB+` is two thirds `BBB` and one third `A`. Grades beyond the ends of
    /// the scale (`A+`, `B-`), or whose neighbour fails `available`, take
    /// their own broad grade at full weight.
    pub fn broad_weights_with(&self, available: impl Fn(Broad) -> bool) -> Vec<(Broad, f64)> {
        let neighbour = match self.modifier {
            Modifier::Flat => None,
            Modifier::Plus => self.broad.above(),
            Modifier::Minus => self.broad.below(),
        };
        match neighbour {
            Some(n) if available(n) => {
                vec![(self.broad, 1.0 - NOTCH_WEIGHT), (n, NOTCH_WEIGHT)]
            }
            _ => vec![(self.broad, 1.0)],
        }
    }

    pub fn broad_weights(&self) -> Vec<(Broad, f64)> {
        self.broad_weights_with(|_| true)
    }
}

impl fmt::Display for RatingGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.modifier {
            Modifier::Plus => "+",
            Modifier::Flat => "",
            Modifier::Minus => "-",
        };
        write!(f, "{}{}", self.broad.as_str(), m)
    }
}

impl FromStr for RatingGrade {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (letters, modifier) = if let Some(r) = s.strip_suffix('+') {
            (r, Modifier::Plus)
        } else if let Some(r) = s.strip_suffix('-').or_else(|| s.strip_suffix('\u{2212}')) {
            (r, Modifier::Minus)
        } else {
            (s, Modifier::Flat)
        };
        let broad = match letters.to_ascii_uppercase().as_str() {
            "A" => Broad::A,
            "BBB" => Broad::Bbb,
            "BB" => Broad::Bb,
            "B" => Broad::B,
            _ => {
                return Err(Error::InvalidInput(format!(
                    "unknown rating grade '{s}' (expected A+ .. B-)"
                )))
            }
        };
        Ok(Self::new(broad, modifier))
    }
}

/// Rating-dependent jump intensity and country-barrier depth.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingSchemes {
    lambda: BTreeMap<Broad, f64>,
    lstar_c: BTreeMap<Broad, f64>,
    lambda_overrides: BTreeMap<RatingGrade, f64>,
    lstar_c_overrides: BTreeMap<RatingGrade, f64>,
}

impl Default for RatingSchemes {
    fn default() -> Self {
        Self {
            lambda: Broad::ALL.into_iter().zip([0.125, 0.25, 0.5, 1.0]).collect(),
            lstar_c: Broad::ALL.into_iter().zip([1.45, 1.35, 1.20, 1.00]).collect(),
            lambda_overrides: BTreeMap::new(),
            lstar_c_overrides: BTreeMap::new(),
        }
    }
}

impl RatingSchemes {
    /// Overrides the jump intensity for one grade (broad grades also move the
    /// interpolation anchors of their modified neighbours).
    pub fn set_lambda(&mut self, grade: RatingGrade, lambda: f64) -> Result<()> {
        if !(lambda > 0.0 && lambda <= crate::barrier::LAMBDA_MAX) {
            return domain(format!("scheme lambda must lie in (0, 4] (got {lambda} for {grade})"));
        }
        if grade.is_broad() {
            self.lambda.insert(grade.broad(), lambda);
        } else {
            self.lambda_overrides.insert(grade, lambda);
        }
        Ok(())
    }

    /// Overrides the country barrier depth for one grade; `inf` disables the
    /// country trigger.
    pub fn set_lstar_c(&mut self, grade: RatingGrade, lstar_c: f64) -> Result<()> {
        if !(lstar_c >= 1.0) {
            return domain(format!("L*_c must be >= 1 (got {lstar_c} for {grade})"));
        }
        if grade.is_broad() {
            self.lstar_c.insert(grade.broad(), lstar_c);
        } else {
            self.lstar_c_overrides.insert(grade, lstar_c);
        }
        Ok(())
    }

    fn interpolate(table: &BTreeMap<Broad, f64>, grade: RatingGrade) -> f64 {
        grade.broad_weights().iter().map(|(b, w)| w * table[b]).sum()
    }

    pub fn lambda(&self, grade: RatingGrade) -> f64 {
        self.lambda_overrides
            .get(&grade)
            .copied()
            .unwrap_or_else(|| Self::interpolate(&self.lambda, grade))
    }

    pub fn lstar_c(&self, grade: RatingGrade) -> f64 {
        if let Some(v) = self.lstar_c_overrides.get(&grade) {
            return *v;
        }
        let weights = grade.broad_weights();
        if weights.iter().any(|(b, _)| self.lstar_c[b].is_infinite()) {
            return weights
                .iter()
                .map(|(b, _)| self.lstar_c[b])
                .fold(f64::NEG_INFINITY, f64::max);
        }
        Self::interpolate(&self.lstar_c, grade)
    }

    /// Every explicitly configured value, as `(key, value)` config pairs.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (b, v) in &self.lambda {
            out.push((format!("lambda.{}", b.as_str()), *v));
        }
        for (g, v) in &self.lambda_overrides {
            out.push((format!("lambda.{g}"), *v));
        }
        for (b, v) in &self.lstar_c {
            out.push((format!("lstar_c.{}", b.as_str()), *v));
        }
        for (g, v) in &self.lstar_c_overrides {
            out.push((format!("lstar_c.{g}"), *v));
        }
        out
    }
}

/// Country barrier depth for a grade.
pub fn lstar_c_for_grade(grade: RatingGrade, schemes: &RatingSchemes) -> f64 {
    schemes.lstar_c(grade)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn g(s: &str) -> RatingGrade {
        s.parse().unwrap()
    }

    #[test]
    fn parse_and_display_round_trip() {
        for grade in RatingGrade::all() {
            assert_eq!(g(&grade.to_string()), grade);
        }
        assert_eq!(g("bbb-"), g("BBB-"));
        assert_eq!(g("BB\u{2212}"), g("BB-"));
        assert!("CCC".parse::<RatingGrade>().is_err());
        assert!("AA".parse::<RatingGrade>().is_err());
        assert!("".parse::<RatingGrade>().is_err());
    }

    #[test]
    fn order_and_notches() {
        let all: Vec<_> = RatingGrade::all().collect();
        assert_eq!(all.len(), 12);
        assert_eq!(all[0], g("A+"));
        assert_eq!(all[11], g("B-"));
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g("BBB").notch() - g("A").notch(), 3);
    }

    #[test]
    fn default_tables() {
        let s = RatingSchemes::default();
        assert_eq!(s.lambda(g("BBB")), 0.25);
        assert_eq!(s.lambda(g("B")), 1.0);
        assert_eq!(lstar_c_for_grade(g("BBB"), &s), 1.35);
        assert_eq!(lstar_c_for_grade(g("B"), &s), 1.00);
        assert_eq!(lstar_c_for_grade(g("A"), &s), 1.45);
        assert_eq!(lstar_c_for_grade(g("BB"), &s), 1.20);
    }

    #[test]
    fn modified_grades_interpolate_notch_linearly() {
        let s = RatingSchemes::default();
        assert_abs_diff_eq!(
            lstar_c_for_grade(g("BBB+"), &s),
            1.35 + (1.45 - 1.35) / 3.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(lstar_c_for_grade(g("BBB+"), &s), 1.383_333_333_333, epsilon = 1e-9);
        assert_abs_diff_eq!(lstar_c_for_grade(g("BB-"), &s), 1.20 - 0.20 / 3.0, epsilon = 1e-12);
        // lambda for BBB+ sits between BBB and A: ~0.208, the caption's "0.2"
        assert_abs_diff_eq!(s.lambda(g("BBB+")), 0.25 - 0.125 / 3.0, epsilon = 1e-12);
        // ends of the scale clamp to their broad grade
        assert_eq!(s.lambda(g("A+")), 0.125);
        assert_eq!(lstar_c_for_grade(g("B-"), &s), 1.0);
    }

    #[test]
    fn overrides() {
        let mut s = RatingSchemes::default();
        s.set_lstar_c(g("BB"), f64::INFINITY).unwrap();
        assert!(s.lstar_c(g("BB")).is_infinite());
        assert!(s.lstar_c(g("BB+")).is_infinite());
        s.set_lstar_c(g("BBB-"), 1.1).unwrap();
        assert_eq!(s.lstar_c(g("BBB-")), 1.1);
        assert!(s.set_lstar_c(g("B"), 0.9).is_err());
        assert!(s.set_lambda(g("B"), 0.0).is_err());
        s.set_lambda(g("A"), 0.1).unwrap();
        assert_eq!(s.lambda(g("A")), 0.1);
    }
}
