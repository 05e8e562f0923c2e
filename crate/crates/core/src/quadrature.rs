//! Quadrature on the reference triangle `{(0,0), (1,0), (0,1)}` and on `[0, 1]`.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

/// A rule on the reference triangle. Points are reference coordinates
/// `(xi, eta)`; weights are positive and sum to the reference area `1/2`.
#[derive(Clone, Debug)]
pub struct QuadRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    /// Barycentric coordinates of every point.
    pub fn barycentric(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| [1.0 - p[0] - p[1], p[0], p[1]]).collect()
    }
}

/// A rule on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

fn gauss_legendre_unit(n: usize) -> LineRule {
    let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("n >= 1"));
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    LineRule {
        points: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Six-point symmetric rule, exact for degree 4.
fn symmetric_degree4() -> QuadRule {
    const A1: f64 = 0.445_948_490_915_965;
    const W1: f64 = 0.223_381_589_678_011;
    const A2: f64 = 0.091_576_213_509_771;
    const W2: f64 = 0.109_951_743_655_322;
    let mut points = Vec::with_capacity(6);
    let mut weights = Vec::with_capacity(6);
    for (a, w) in [(A1, W1), (A2, W2)] {
        let b = 1.0 - 2.0 * a;
        for bary in [[a, a, b], [a, b, a], [b, a, a]] {
            points.push([bary[1], bary[2]]);
            weights.push(0.5 * w);
        }
    }
    QuadRule {
        points,
        weights,
        degree: 4,
    }
}

/// Collapsed (Duffy) product of `n`-point Gauss rules; exact for degree `2n - 2`.
pub fn collapsed_gauss(n: usize) -> QuadRule {
    let g = gauss_legendre_unit(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (&b, &wb) in g.points.iter().zip(&g.weights) {
        for (&a, &wa) in g.points.iter().zip(&g.weights) {
            points.push([a * (1.0 - b), b]);
            weights.push(wa * wb * (1.0 - b));
        }
    }
    QuadRule {
        points,
        weights,
        degree: 2 * n - 2,
    }
}

/// Degree-4 rule used for stiffness and mass terms.
pub fn stiffness_rule() -> &'static QuadRule {
    static RULE: OnceLock<QuadRule> = OnceLock::new();
    RULE.get_or_init(symmetric_degree4)
}

/// Degree-8 rule used for right-hand sides and error norms.
pub fn accurate_rule() -> &'static QuadRule {
    static RULE: OnceLock<QuadRule> = OnceLock::new();
    RULE.get_or_init(|| collapsed_gauss(5))
}

/// High-order rule (degree 18) for projections and interpolation of smooth
/// non-polynomial data, where quadrature error must stay below roundoff.
pub fn projection_rule() -> &'static QuadRule {
    static RULE: OnceLock<QuadRule> = OnceLock::new();
    RULE.get_or_init(|| collapsed_gauss(10))
}

/// Ten-point Gauss rule on `[0, 1]` used for edge moments of smooth data.
pub fn projection_edge_rule() -> &'static LineRule {
    static RULE: OnceLock<LineRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_unit(10))
}

/// Four-point Gauss rule on `[0, 1]` for edge integrals (exact to degree 7).
pub fn edge_rule() -> &'static LineRule {
    static RULE: OnceLock<LineRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_unit(4))
}
