use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{assemble_norm_matrix_full, assemble_volume, dirichlet_lifting, DofMap, EdgeTriples, VolumeTerm};
use super::quadrature::TriangleRule;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{control_indicator, Geometry, Mesh, RegionTag};
use crate::ocp::ParameterPoint;

/// Piece of a piecewise-affine geometric map, identified by its `x1` stretch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Piece {
    /// Unstretched (`d = 1`).
    Fixed,
    /// `d = 1 + 2(μ_u − 0.5)`.
    Left,
    /// `d = 1 − 2(μ_u − 0.5)`.
    Right,
}

impl Piece {
    pub fn stretch(self, muu: f64) -> f64 {
        match self {
            Piece::Fixed => 1.0,
            Piece::Left => 1.0 + 2.0 * (muu - 0.5),
            Piece::Right => 1.0 - 2.0 * (muu - 0.5),
        }
    }
}

/// Coefficient `μ1^a · μ2^[b] · d(μ_u)^c` of one affine component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub mu1_power: i32,
    pub times_mu2: bool,
    pub piece: Piece,
    pub stretch_power: i32,
}

impl Theta {
    pub const ONE: Theta = Theta {
        mu1_power: 0,
        times_mu2: false,
        piece: Piece::Fixed,
        stretch_power: 0,
    };

    pub fn new(mu1_power: i32, piece: Piece, stretch_power: i32) -> Self {
        Theta {
            mu1_power,
            times_mu2: false,
            piece,
            stretch_power,
        }
    }

    pub fn times_mu2(self) -> Self {
        Theta {
            times_mu2: true,
            ..self
        }
    }

    pub fn eval(&self, mu: &ParameterPoint) -> f64 {
        let mut v = mu.mu1.powi(self.mu1_power) * self.piece.stretch(mu.muu).powi(self.stretch_power);
        if self.times_mu2 {
            v *= mu.mu2;
        }
        v
    }
}

/// `θ(μ) · matrix`, matrix on free dofs.
#[derive(Debug, Clone)]
pub struct AffineTerm {
    pub label: String,
    pub theta: Theta,
    pub matrix: CsrMatrix,
}

/// `θ(μ) · vector`, vector on free dofs.
#[derive(Debug, Clone)]
pub struct AffineVector {
    pub label: String,
    pub theta: Theta,
    pub vector: DVector<f64>,
}

/// How the control mass `C(μ)` depends on the parameter.
#[derive(Debug, Clone)]
pub enum ControlModel {
    /// `C(μ) = Σ_k χ_k(μ_u) B^k` with the geometry's indicator; not affine.
    Indicator(Geometry),
    /// Fixed control boundary with affine coefficients.
    Affine(Vec<AffineTerm>),
}

/// Operators of the optimality system evaluated at one parameter, on free dofs.
#[derive(Debug, Clone)]
pub struct OperatorSet<'a> {
    pub d_a: CsrMatrix,
    pub m_o: CsrMatrix,
    pub c: CsrMatrix,
    pub f: DVector<f64>,
    pub y_d: DVector<f64>,
    pub x: &'a CsrMatrix,
    pub lifting: &'a DVector<f64>,
    pub dofs: &'a DofMap,
    /// Nodal control indicator, when the control model has one.
    pub chi: Option<Vec<f64>>,
    /// `M_o` on the full vertex set, for evaluating the tracking cost.
    pub m_o_full: CsrMatrix,
}

/// A discretised parametric optimal control problem in affine form, except for
/// the control operator, which may depend on `μ_u` through the indicator.
#[derive(Debug, Clone)]
pub struct Problem {
    mesh: Mesh,
    dofs: DofMap,
    x: CsrMatrix,
    x_full: CsrMatrix,
    lifting: DVector<f64>,
    muu_range: (f64, f64),
    triples: EdgeTriples,
    pub state: Vec<AffineTerm>,
    pub obs: Vec<AffineTerm>,
    pub f: Vec<AffineVector>,
    pub y_d: Vec<AffineVector>,
    pub control: ControlModel,
    /// Observation terms on the full vertex set.
    obs_full: Vec<AffineTerm>,
}

/// Matrix on the full vertex set with its coefficient, before Dirichlet reduction.
pub struct FullTerm {
    pub label: String,
    pub theta: Theta,
    pub matrix: CsrMatrix,
}

impl Problem {
    /// Advection–diffusion problem on a physical geometry with Dirichlet value `g`.
    pub fn physical(mesh: Mesh, geometry: Geometry, g: f64) -> Result<Self> {
        let rule = TriangleRule::degree3();
        let all = |_: RegionTag| true;
        let k = assemble_volume(&mesh, VolumeTerm::DiffusionXX, &rule, all)
            .add(&assemble_volume(&mesh, VolumeTerm::DiffusionYY, &rule, all));
        let state = vec![
            FullTerm {
                label: "diffusion".into(),
                theta: Theta::new(-1, Piece::Fixed, 0),
                matrix: k,
            },
            FullTerm {
                label: "advection".into(),
                theta: Theta::ONE,
                matrix: assemble_volume(&mesh, VolumeTerm::Advection, &rule, all),
            },
        ];
        let obs = vec![FullTerm {
            label: "observation".into(),
            theta: Theta::ONE,
            matrix: assemble_volume(&mesh, VolumeTerm::Mass, &rule, |r| r.is_observed()),
        }];
        let (lo, hi) = geometry.muu_interval();
        Self::from_full_terms(mesh, g, (lo, hi), state, obs, |_, _| ControlModel::Indicator(geometry))
    }

    pub fn from_full_terms(
        mesh: Mesh,
        g: f64,
        muu_range: (f64, f64),
        state: Vec<FullTerm>,
        obs: Vec<FullTerm>,
        control: impl FnOnce(&DofMap, &EdgeTriples) -> ControlModel,
    ) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::InvalidArgument(format!("Dirichlet value {g} is not finite")));
        }
        let dofs = DofMap::new(&mesh);
        if dofs.n_free() == 0 {
            return Err(Error::InvalidArgument("mesh has no free dofs".into()));
        }
        let lifting = dirichlet_lifting(&dofs, g);
        let ones = DVector::from_element(dofs.n_full(), 1.0);
        let f = state
            .iter()
            .map(|t| AffineVector {
                label: format!("lifting:{}", t.label),
                theta: t.theta,
                vector: -dofs.restrict_vector(&t.matrix.mul_vec(&lifting)),
            })
            .collect();
        let mut y_d = Vec::new();
        let obs_full: Vec<AffineTerm> = obs
            .iter()
            .map(|t| AffineTerm {
                label: t.label.clone(),
                theta: t.theta,
                matrix: t.matrix.clone(),
            })
            .collect();
        for t in &obs {
            y_d.push(AffineVector {
                label: format!("desired:{}", t.label),
                theta: t.theta.times_mu2(),
                vector: dofs.restrict_vector(&t.matrix.mul_vec(&ones)),
            });
            y_d.push(AffineVector {
                label: format!("lifting:{}", t.label),
                theta: t.theta,
                vector: -dofs.restrict_vector(&t.matrix.mul_vec(&lifting)),
            });
        }
        let reduce = |terms: Vec<FullTerm>| -> Vec<AffineTerm> {
            terms
                .into_iter()
                .map(|t| AffineTerm {
                    label: t.label,
                    theta: t.theta,
                    matrix: dofs.restrict_matrix(&t.matrix),
                })
                .collect()
        };
        let state = reduce(state);
        let obs = reduce(obs);
        let triples = EdgeTriples::assemble(&mesh);
        let control = control(&dofs, &triples);
        let x_full = assemble_norm_matrix_full(&mesh);
        let x = dofs.restrict_matrix(&x_full);
        Ok(Problem {
            mesh,
            dofs,
            x,
            x_full,
            lifting,
            muu_range,
            triples,
            state,
            obs,
            f,
            y_d,
            control,
            obs_full,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn n_free(&self) -> usize {
        self.dofs.n_free()
    }

    /// Norm matrix `X` on free dofs.
    pub fn norm_matrix(&self) -> &CsrMatrix {
        &self.x
    }

    /// Norm matrix on the full vertex set.
    pub fn norm_matrix_full(&self) -> &CsrMatrix {
        &self.x_full
    }

    /// Full-length lifting vector.
    pub fn lifting(&self) -> &DVector<f64> {
        &self.lifting
    }

    pub fn edge_triples(&self) -> &EdgeTriples {
        &self.triples
    }

    pub fn muu_range(&self) -> (f64, f64) {
        self.muu_range
    }

    /// Checks `μ1 > 0`, `α > 0` and `μ_u` inside the open admissible interval.
    pub fn check(&self, mu: &ParameterPoint) -> Result<()> {
        let range = |name, value: f64, lo: f64, hi: f64| {
            if value > lo && value < hi {
                Ok(())
            } else {
                Err(Error::ParameterRange { name, value, lo, hi })
            }
        };
        range("mu1", mu.mu1, 0.0, f64::INFINITY)?;
        range("alpha", mu.alpha, 0.0, f64::INFINITY)?;
        if !mu.mu2.is_finite() {
            return Err(Error::ParameterRange {
                name: "mu2",
                value: mu.mu2,
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            });
        }
        match &self.control {
            ControlModel::Indicator(geometry) => geometry.check_muu(mu.muu),
            ControlModel::Affine(_) => range("mu_u", mu.muu, self.muu_range.0, self.muu_range.1),
        }
    }

    /// Nodal control indicator at `μ_u`, for indicator-based control.
    pub fn indicator(&self, muu: f64) -> Result<Option<Vec<f64>>> {
        match &self.control {
            ControlModel::Indicator(geometry) => {
                Ok(Some(control_indicator(&self.mesh, muu, geometry)?.nodal_values))
            }
            ControlModel::Affine(_) => Ok(None),
        }
    }

    /// `Σ_k χ_k B^k` on free dofs.
    pub fn control_from_chi(&self, chi: &[f64]) -> CsrMatrix {
        self.dofs.restrict_matrix(&self.triples.weighted(chi))
    }

    pub fn assemble(&self, mu: &ParameterPoint) -> Result<OperatorSet<'_>> {
        self.check(mu)?;
        let combine = |terms: &[AffineTerm]| {
            let parts: Vec<(f64, &CsrMatrix)> =
                terms.iter().map(|t| (t.theta.eval(mu), &t.matrix)).collect();
            CsrMatrix::linear_combination(&parts)
        };
        let sum = |terms: &[AffineVector]| {
            terms
                .iter()
                .fold(DVector::zeros(self.n_free()), |acc, t| acc + &t.vector * t.theta.eval(mu))
        };
        let chi = self.indicator(mu.muu)?;
        let c = match (&self.control, &chi) {
            (ControlModel::Affine(terms), _) => combine(terms),
            (ControlModel::Indicator(_), Some(chi)) => self.control_from_chi(chi),
            (ControlModel::Indicator(_), None) => unreachable!(),
        };
        Ok(OperatorSet {
            d_a: combine(&self.state),
            m_o: combine(&self.obs),
            c,
            f: sum(&self.f),
            y_d: sum(&self.y_d),
            x: &self.x,
            lifting: &self.lifting,
            dofs: &self.dofs,
            chi,
            m_o_full: combine(&self.obs_full),
        })
    }
}
