//! Geometric recasting of the channel geometry onto the reference domain at
//! `μ_u = 0.5`, where every form becomes affine in the parameters.
//!
//! The map stretches `x1` piecewise: the identity on `Ω1`, factor
//! `d_L = 1 + 2(μ_u − 0.5)` on `[1, 1.5]` and `d_R = 1 − 2(μ_u − 0.5)` on
//! `[1.5, 2]`, leaving `x2` alone. With `G = diag(d, 1)` the pulled-back forms
//! pick up `(1/d) ∂₁∂₁ + d ∂₂∂₂` for diffusion, `d` for mass and boundary mass,
//! and nothing for advection, because the advection field depends on `x2` only
//! and its `x1` component meets `1/d` from the gradient and `d` from the Jacobian.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::quadrature::TriangleRule;
use crate::fem::{assemble_volume, AffineTerm, ControlModel, FullTerm, Piece, Problem, Theta, VolumeTerm};
use crate::linalg::CsrMatrix;
use crate::mesh::{control_indicator, generate_test1_mesh, subdomain, Geometry, Mesh, RegionTag};

/// Reference value of the geometric parameter.
pub const REFERENCE_MUU: f64 = 0.5;

/// `T(x) = c + G x` on one subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineSubmap {
    pub region: u8,
    pub g: [[f64; 2]; 2],
    pub c: [f64; 2],
}

impl AffineSubmap {
    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        [
            self.c[0] + self.g[0][0] * x[0] + self.g[0][1] * x[1],
            self.c[1] + self.g[1][0] * x[0] + self.g[1][1] * x[1],
        ]
    }

    pub fn det(&self) -> f64 {
        self.g[0][0] * self.g[1][1] - self.g[0][1] * self.g[1][0]
    }
}

/// Piece of the map a subdomain belongs to.
pub fn piece_of(region: u8) -> Piece {
    use subdomain::*;
    match region {
        OMEGA2_LEFT | OMEGA3_LEFT | OMEGA4_LEFT => Piece::Left,
        OMEGA2_RIGHT | OMEGA3_RIGHT | OMEGA4_RIGHT => Piece::Right,
        _ => Piece::Fixed,
    }
}

fn check_muu(muu: f64) -> Result<()> {
    if muu > 0.0 && muu < 1.0 {
        Ok(())
    } else {
        Err(Error::ParameterRange {
            name: "mu_u",
            value: muu,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

/// The seven submaps of `T_μu`, one per subdomain id.
pub fn build_test1_map(muu: f64) -> Result<Vec<AffineSubmap>> {
    check_muu(muu)?;
    use subdomain::*;
    let regions = [OMEGA1, OMEGA2_LEFT, OMEGA3_LEFT, OMEGA4_LEFT, OMEGA2_RIGHT, OMEGA3_RIGHT, OMEGA4_RIGHT];
    Ok(regions
        .into_iter()
        .map(|region| {
            let piece = piece_of(region);
            let d = piece.stretch(muu);
            let anchor = match piece {
                Piece::Fixed => 0.0,
                Piece::Left => 1.0,
                Piece::Right => 2.0,
            };
            AffineSubmap {
                region,
                g: [[d, 0.0], [0.0, 1.0]],
                c: [anchor * (1.0 - d), 0.0],
            }
        })
        .collect())
}

/// Reference mesh moved by `T_μu`.
pub fn mapped_mesh(reference: &Mesh, muu: f64) -> Result<Mesh> {
    let maps = build_test1_map(muu)?;
    reference.mapped(|x, r| {
        maps.iter()
            .find(|m| m.region == r.subdomain())
            .map_or(x, |m| m.apply(x))
    })
}

/// Indicator of the reference control boundary.
pub fn reference_indicator(reference: &Mesh) -> Result<Vec<f64>> {
    Ok(control_indicator(reference, REFERENCE_MUU, &Geometry::Test1)?.nodal_values)
}

/// Per-piece components on the full vertex set with their coefficients:
/// `(state, observation, control)`.
pub fn assemble_reference_components(
    reference: &Mesh,
) -> Result<(Vec<FullTerm>, Vec<FullTerm>, Vec<FullTerm>)> {
    let rule = TriangleRule::degree3();
    let chi = reference_indicator(reference)?;
    let triples = crate::fem::EdgeTriples::assemble(reference);
    let (mut state, mut obs, mut control) = (Vec::new(), Vec::new(), Vec::new());
    for piece in [Piece::Fixed, Piece::Left, Piece::Right] {
        let in_piece = move |r: RegionTag| piece_of(r.subdomain()) == piece;
        let name = format!("{piece:?}").to_lowercase();
        let term = |label: &str, theta: Theta, matrix: CsrMatrix| FullTerm {
            label: format!("{label}:{name}"),
            theta,
            matrix,
        };
        state.push(term(
            "diffusion_x1",
            Theta::new(-1, piece, -1),
            assemble_volume(reference, VolumeTerm::DiffusionXX, &rule, in_piece),
        ));
        state.push(term(
            "diffusion_x2",
            Theta::new(-1, piece, 1),
            assemble_volume(reference, VolumeTerm::DiffusionYY, &rule, in_piece),
        ));
        state.push(term(
            "advection",
            Theta::ONE,
            assemble_volume(reference, VolumeTerm::Advection, &rule, in_piece),
        ));
        let mass = assemble_volume(reference, VolumeTerm::Mass, &rule, move |r| r.is_observed() && in_piece(r));
        if mass.nnz() > 0 {
            obs.push(term("observation", Theta::new(0, piece, 1), mass));
        }
        let c = triples.weighted_by(&chi, |r| if in_piece(r) { 1.0 } else { 0.0 });
        if c.nnz() > 0 {
            control.push(term("control", Theta::new(0, piece, 1), c));
        }
    }
    Ok((state, obs, control))
}

/// The recast problem on the reference channel mesh of size `h`.
pub fn recast_problem(h: f64, g: f64) -> Result<Problem> {
    recast_problem_on(generate_test1_mesh(h)?, g)
}

pub fn recast_problem_on(reference: Mesh, g: f64) -> Result<Problem> {
    let (state, obs, control) = assemble_reference_components(&reference)?;
    Problem::from_full_terms(reference, g, (0.0, 1.0), state, obs, move |dofs, _| {
        ControlModel::Affine(
            control
                .into_iter()
                .map(|t| AffineTerm {
                    label: t.label,
                    theta: t.theta,
                    matrix: dofs.restrict_matrix(&t.matrix),
                })
                .collect(),
        )
    })
}

/// `Σ_l θ_l(μ_u) X_l` on free dofs: the norm of the mapped domain pulled back.
pub fn transformed_norm_matrix(reference: &Mesh, muu: f64) -> Result<CsrMatrix> {
    check_muu(muu)?;
    let rule = TriangleRule::degree3();
    let mut parts = Vec::new();
    for piece in [Piece::Fixed, Piece::Left, Piece::Right] {
        let d = piece.stretch(muu);
        let in_piece = move |r: RegionTag| piece_of(r.subdomain()) == piece;
        parts.push((1.0 / d, assemble_volume(reference, VolumeTerm::DiffusionXX, &rule, in_piece)));
        parts.push((d, assemble_volume(reference, VolumeTerm::DiffusionYY, &rule, in_piece)));
        parts.push((d, assemble_volume(reference, VolumeTerm::Mass, &rule, in_piece)));
    }
    let refs: Vec<(f64, &CsrMatrix)> = parts.iter().map(|(c, m)| (*c, m)).collect();
    Ok(crate::fem::DofMap::new(reference).restrict_matrix(&CsrMatrix::linear_combination(&refs)))
}

/// Reinterprets reference nodal values on the mapped mesh (`v ∘ T⁻¹`).
pub fn push_forward(reference: &Mesh, values: &DVector<f64>, muu: f64) -> Result<(Mesh, DVector<f64>)> {
    Ok((mapped_mesh(reference, muu)?, values.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_parameter_is_identity() {
        for m in build_test1_map(0.5).unwrap() {
            assert_eq!(m.g, [[1.0, 0.0], [0.0, 1.0]]);
            assert_eq!(m.c, [0.0, 0.0]);
        }
    }

    #[test]
    fn left_piece_and_interface() {
        let maps = build_test1_map(0.7).unwrap();
        let left = maps.iter().find(|m| m.region == subdomain::OMEGA2_LEFT).unwrap();
        let right = maps.iter().find(|m| m.region == subdomain::OMEGA2_RIGHT).unwrap();
        let x = left.apply([1.25, 0.5]);
        assert!((x[0] - 1.35).abs() < 1e-15 && x[1] == 0.5);
        assert!((left.apply([1.5, 0.3])[0] - 1.7).abs() < 1e-15);
        assert!((right.apply([1.5, 0.3])[0] - 1.7).abs() < 1e-15);
        assert!(maps.iter().all(|m| m.det() > 0.0));
        assert!(build_test1_map(0.0).is_err() && build_test1_map(1.0).is_err());
    }

    #[test]
    fn component_count_is_small() {
        let m = generate_test1_mesh(0.25).unwrap();
        let (s, o, c) = assemble_reference_components(&m).unwrap();
        assert!(s.len() + o.len() + c.len() <= 21);
    }

    #[test]
    fn affine_sum_matches_mapped_assembly() {
        let reference = generate_test1_mesh(0.1).unwrap();
        let recast = recast_problem_on(reference.clone(), 1.0).unwrap();
        let chi = reference_indicator(&reference).unwrap();
        for muu in [0.5, 0.7, 0.13] {
            let mu = crate::ocp::ParameterPoint::new(9.0, 1.3, muu);
            let ops = recast.assemble(&mu).unwrap();
            let mapped = mapped_mesh(&reference, muu).unwrap();
            let direct = Problem::physical(mapped.clone(), Geometry::Test1, 1.0).unwrap();
            let dops = direct.assemble(&mu).unwrap();
            assert_eq!(dops.chi.as_ref().unwrap(), &chi);
            for (a, b) in [(&ops.d_a, &dops.d_a), (&ops.m_o, &dops.m_o), (&ops.c, &dops.c)] {
                assert!((a.to_dense() - b.to_dense()).amax() < 1e-12, "muu = {muu}");
            }
            assert!((&ops.f - &dops.f).amax() < 1e-12 && (&ops.y_d - &dops.y_d).amax() < 1e-12);
            let x = transformed_norm_matrix(&reference, muu).unwrap();
            assert!((x.to_dense() - direct.norm_matrix().to_dense()).amax() < 1e-12);
        }
    }

    #[test]
    fn push_forward_keeps_values() {
        let m = generate_test1_mesh(0.25).unwrap();
        let v = DVector::from_element(m.n_vertices(), 2.0);
        let (mapped, w) = push_forward(&m, &v, 0.5).unwrap();
        assert_eq!(mapped, m);
        assert_eq!(w, v);
    }
}
