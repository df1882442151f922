//! Quadrature on the reference triangle and the reference edge.
//!
//! Triangle points are `(ξ, η)` in the unit triangle; weights sum to one, so
//! an element integral is `area · Σ w f(x(ξ, η))`.

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Four-point rule, exact for cubics.
    pub fn degree3() -> Self {
        TriangleRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0], [0.2, 0.2], [0.6, 0.2], [0.2, 0.6]],
            weights: vec![-27.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0],
        }
    }

    /// Seven-point rule, exact for quintics.
    pub fn degree5() -> Self {
        let s = 15f64.sqrt();
        let (a1, b1, w1) = ((9.0 - 2.0 * s) / 21.0, (6.0 + s) / 21.0, (155.0 + s) / 1200.0);
        let (a2, b2, w2) = ((9.0 + 2.0 * s) / 21.0, (6.0 - s) / 21.0, (155.0 - s) / 1200.0);
        TriangleRule {
            points: vec![
                [1.0 / 3.0, 1.0 / 3.0],
                [b1, b1],
                [a1, b1],
                [b1, a1],
                [b2, b2],
                [a2, b2],
                [b2, a2],
            ],
            weights: vec![0.225, w1, w1, w1, w2, w2, w2],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Two-point Gauss–Legendre on `[0, 1]`: `(s, w)` pairs, exact for cubics.
pub fn gauss2_unit() -> [(f64, f64); 2] {
    let d = 0.5 / 3f64.sqrt();
    [(0.5 - d, 0.5), (0.5 + d, 0.5)]
}
