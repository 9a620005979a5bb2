use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    /// The double root at `r = 4`.
    SemiStable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub u: f64,
    pub stability: Stability,
}

/// Constant solutions of `u' = r u^2 (1 - u) - u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibria {
    pub r: f64,
    pub roots: Vec<Root>,
}

impl Equilibria {
    /// `(u-, u+)`, equal to `(1/2, 1/2)` at `r = 4`; `None` below 4.
    pub fn positive_pair(&self) -> Option<(f64, f64)> {
        match self.roots.len() {
            2 => Some((self.roots[1].u, self.roots[1].u)),
            3 => Some((self.roots[1].u, self.roots[2].u)),
            _ => None,
        }
    }
}

/// `w = sqrt(1/4 - 1/r)`, defined for `r >= 4`.
pub fn half_gap(r: f64) -> Option<f64> {
    (r >= 4.0).then(|| (0.25 - 1.0 / r).max(0.0).sqrt())
}

pub fn equilibria(r: f64) -> Equilibria {
    let zero = Root { u: 0.0, stability: Stability::Stable };
    let roots = if r < 4.0 {
        vec![zero]
    } else if r == 4.0 {
        vec![zero, Root { u: 0.5, stability: Stability::SemiStable }]
    } else {
        let w = half_gap(r).unwrap();
        vec![
            zero,
            Root { u: 0.5 - w, stability: Stability::Unstable },
            Root { u: 0.5 + w, stability: Stability::Stable },
        ]
    };
    Equilibria { r, roots }
}

/// Reaction term of the single-site equation.
pub fn reaction(r: f64, u: f64) -> f64 {
    r * u * u * (1.0 - u) - u
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_sets() {
        assert_eq!(equilibria(3.0).roots.len(), 1);
        let e4 = equilibria(4.0);
        assert_eq!(e4.positive_pair(), Some((0.5, 0.5)));
        let e8 = equilibria(8.0);
        let (lo, hi) = e8.positive_pair().unwrap();
        assert!((lo - 0.146_446_609_4).abs() < 1e-9);
        assert!((hi - 0.853_553_390_6).abs() < 1e-9);
        assert_eq!(e8.roots[1].stability, Stability::Unstable);
        assert!((lo + hi - 1.0).abs() < 1e-15);
    }
}
