//! Physical operators of the gauge theory: local gauge transformations,
//! the Gauss-law projector, vertex number operators, and the Hamiltonian
//! terms evaluated as observables.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{fock_lift, StateVector};
use crate::lattice::{plaquettes, Dir, PathSpec, PathStep, Orientation, Vertex};
use crate::oracle::{meson_expectation, wilson_expectation, MesonOp};

/// Applies the local gauge transformation at `vertex` for group element
/// `g`: left translation on outgoing links, adjoint right translation on
/// incoming links, the adjoint matter rotation, and the conjugated
/// determinant factor on the odd sublattice.
pub fn gauss_transform(state: &mut StateVector, vertex: Vertex, g: usize) -> Result<()> {
    let layout = state.layout().clone();
    let geom = layout.geometry();
    let group = layout.group();
    group.check_element(g)?;
    if !geom.contains(vertex) {
        return Err(Error::VertexOutOfBounds {
            x: vertex.x as i64,
            y: vertex.y as i64,
        });
    }
    let ginv = group.inv(g);
    let order = group.order();
    for dir in Dir::BOTH {
        // outgoing link: Theta^L_g, |h> -> |g^{-1} h>
        if let Ok(l) = geom.link_id(vertex, dir) {
            let perm: Vec<usize> = (0..order).map(|h| group.mul(ginv, h)).collect();
            state.apply_qudit_permutation(layout.link_qudit(l), &perm)?;
        }
        // incoming link: Theta^{R dagger}_g, |h> -> |h g>
        if let Some(w) = geom.neighbor(vertex, dir, false) {
            if let Ok(l) = geom.link_id(w, dir) {
                let perm: Vec<usize> = (0..order).map(|h| group.mul(h, g)).collect();
                state.apply_qudit_permutation(layout.link_qudit(l), &perm)?;
            }
        }
    }
    // matter: theta_g^dagger = lift of D(g^{-1}); odd vertices pick up
    // the conjugated determinant of D(g^{-1})
    let d = layout.comps();
    let mut lift = fock_lift(group.rep(ginv), d);
    if vertex.parity() == 1 {
        let det = group.rep_det(ginv).conj();
        for v in lift.iter_mut() {
            *v *= det;
        }
    }
    state.apply_mode_block(layout.mode_index(vertex, 0), d, &lift)
}

/// Norm of (Theta_g(x) - 1)|psi>; zero on gauge-invariant states.
pub fn gauss_residual(state: &StateVector, vertex: Vertex, g: usize) -> Result<f64> {
    let mut t = state.clone();
    gauss_transform(&mut t, vertex, g)?;
    t.add_scaled(state, Complex64::new(-1.0, 0.0));
    Ok(t.norm())
}

/// Group-averaging projector onto the gauge-invariant subspace, applied
/// vertex by vertex. Renormalizes and returns the projected norm; errors
/// out when the state has no invariant component.
pub fn gauge_project(state: &mut StateVector) -> Result<f64> {
    let layout = state.layout().clone();
    let order = layout.group().order();
    let vertices: Vec<Vertex> = layout.geometry().vertices().collect();
    for v in vertices {
        let mut acc = state.clone(); // g = identity
        for g in 1..order {
            let mut t = state.clone();
            gauss_transform(&mut t, v, g)?;
            acc.add_scaled(&t, Complex64::new(1.0, 0.0));
        }
        acc.scale(Complex64::new(1.0 / order as f64, 0.0));
        *state = acc;
    }
    let norm = state.norm();
    if norm < 1e-10 {
        return Err(Error::ProjectionVanished(norm));
    }
    state.scale(Complex64::new(1.0 / norm, 0.0));
    Ok(norm)
}

/// Total fermion number on a vertex, summed over spinor components.
pub fn number_expectation(state: &StateVector, vertex: Vertex) -> Result<f64> {
    let layout = state.layout();
    let modes: Vec<usize> = (0..layout.comps())
        .map(|m| layout.mode_index(vertex, m))
        .collect();
    state.number_expectation_modes(&modes)
}

/// Couplings of the gauge-matter term (per link) and the plaquette term.
#[derive(Debug, Clone)]
pub struct Couplings {
    pub lambda_gm: Vec<f64>,
    pub lambda_b: f64,
}

impl Couplings {
    pub fn uniform(n_links: usize, lambda_gm: f64, lambda_b: f64) -> Couplings {
        Couplings {
            lambda_gm: vec![lambda_gm; n_links],
            lambda_b,
        }
    }
}

/// <H_GM> + <H_B> evaluated directly: each gauge-matter term is a
/// single-link string plus its conjugate, each plaquette term is
/// -lambda_B (W + W^dagger).
pub fn hamiltonian_expectation(state: &StateVector, couplings: &Couplings) -> Result<f64> {
    let layout = state.layout();
    let geom = layout.geometry();
    if couplings.lambda_gm.len() != geom.link_count() {
        return Err(Error::ShapeMismatch {
            got: couplings.lambda_gm.len(),
            want: geom.link_count(),
        });
    }
    let mut total = 0.0f64;
    for (l, &lam) in couplings.lambda_gm.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        let step = PathStep {
            link: l,
            orient: Orientation::Forward,
        };
        let path = PathSpec::from_steps(geom, vec![step])?;
        let m = meson_expectation(state, &path, MesonOp::M)?;
        debug_assert!(m.im.abs() < 1e-10);
        total += lam * m.re;
    }
    if couplings.lambda_b != 0.0 {
        for p in plaquettes(geom) {
            let w = wilson_expectation(state, &p)?;
            total -= couplings.lambda_b * 2.0 * w.re;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{build_group, GroupSpec};
    use crate::hilbert::{build_layout, HilbertLayout, LinkState, StatePrep};
    use crate::lattice::{build_lattice, rectangle_loop, Boundary};
    use std::sync::Arc;

    fn layout(spec: GroupSpec, lx: usize, ly: usize) -> Arc<HilbertLayout> {
        let g = build_group(&spec).unwrap();
        let geom = build_lattice(lx, ly, Boundary::Open).unwrap();
        Arc::new(build_layout(g, geom, false).unwrap())
    }

    #[test]
    fn identity_element_acts_trivially() {
        let lay = layout(GroupSpec::S3, 2, 2);
        let s = StateVector::random(lay, 5);
        let mut t = s.clone();
        gauss_transform(&mut t, Vertex::new(1, 1), 0).unwrap();
        assert!(t.distance(&s).unwrap() < 1e-14);
    }

    #[test]
    fn staggered_vacuum_is_gauge_invariant() {
        // Z3 is the discriminating case: the determinant factor only
        // cancels the occupied-site rotation with the adjoint convention.
        for spec in [GroupSpec::Z2, GroupSpec::Z3, GroupSpec::S3] {
            let lay = layout(spec, 2, 2);
            let sv =
                StateVector::prepare(lay.clone(), &StatePrep::staggered_vacuum(&lay)).unwrap();
            for v in lay.geometry().vertices() {
                for g in 0..lay.group().order() {
                    let r = gauss_residual(&sv, v, g).unwrap();
                    assert!(r < 1e-12, "{} at {v} g={g}: {r}", lay.group().name());
                }
            }
        }
    }

    #[test]
    fn empty_odd_vertex_breaks_invariance_by_sign() {
        // Singlet links carry no fermions: the only effect of the
        // transformation at an odd vertex is the det(a^{-1})* = -1 scalar.
        let lay = layout(GroupSpec::Z2, 2, 2);
        let s = StateVector::prepare(lay.clone(), &StatePrep::uniform(&lay, LinkState::Singlet, 0))
            .unwrap();
        let mut t = s.clone();
        gauss_transform(&mut t, Vertex::new(1, 0), 1).unwrap();
        let overlap = s.inner(&t).unwrap();
        assert!((overlap + Complex64::new(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn transforms_commute_at_distinct_vertices_and_compose() {
        let lay = layout(GroupSpec::S3, 2, 2);
        let s = StateVector::random(lay.clone(), 8);
        let (va, vb) = (Vertex::new(0, 0), Vertex::new(1, 1));
        let mut ab = s.clone();
        gauss_transform(&mut ab, va, 3).unwrap();
        gauss_transform(&mut ab, vb, 1).unwrap();
        let mut ba = s.clone();
        gauss_transform(&mut ba, vb, 1).unwrap();
        gauss_transform(&mut ba, va, 3).unwrap();
        assert!(ab.distance(&ba).unwrap() < 1e-12);

        // composition follows the group table with reversed order:
        // Theta_g Theta_h = Theta_{hg}
        let group = lay.group().clone();
        for g in 0..group.order() {
            for h in 0..group.order() {
                let mut lhs = s.clone();
                gauss_transform(&mut lhs, va, h).unwrap();
                gauss_transform(&mut lhs, va, g).unwrap();
                let mut rhs = s.clone();
                gauss_transform(&mut rhs, va, group.mul(h, g)).unwrap();
                assert!(lhs.distance(&rhs).unwrap() < 1e-12, "g={g} h={h}");
            }
        }
    }

    #[test]
    fn transform_is_unitary() {
        let lay = layout(GroupSpec::S3, 2, 2);
        let mut s = StateVector::random(lay, 12);
        gauss_transform(&mut s, Vertex::new(0, 1), 4).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projector_fixes_invariant_states_and_is_idempotent() {
        let lay = layout(GroupSpec::Z2, 2, 2);
        let sv = StateVector::prepare(lay.clone(), &StatePrep::staggered_vacuum(&lay)).unwrap();
        let mut p = sv.clone();
        gauge_project(&mut p).unwrap();
        assert!(p.distance(&sv).unwrap() < 1e-12);

        let mut r = StateVector::random(lay.clone(), 33);
        gauge_project(&mut r).unwrap();
        for v in lay.geometry().vertices() {
            for g in 0..lay.group().order() {
                assert!(gauss_residual(&r, v, g).unwrap() < 1e-12);
            }
        }
        let mut twice = r.clone();
        gauge_project(&mut twice).unwrap();
        assert!(twice.distance(&r).unwrap() < 1e-12);
    }

    #[test]
    fn projector_rejects_orthogonal_component() {
        let lay = layout(GroupSpec::Z2, 2, 2);
        let raw = StateVector::random(lay.clone(), 7);
        let mut projected = raw.clone();
        gauge_project(&mut projected).unwrap();
        // remove the invariant component, leaving nothing to project onto
        let overlap = projected.inner(&raw).unwrap();
        let mut orth = raw.clone();
        orth.add_scaled(&projected, -overlap);
        orth.normalize();
        let mut t = orth;
        assert!(matches!(
            gauge_project(&mut t),
            Err(Error::ProjectionVanished(_))
        ));
    }

    #[test]
    fn number_operator_examples() {
        let lay = layout(GroupSpec::S3, 2, 2);
        let vac = StateVector::basis(lay.clone(), 0);
        assert_eq!(number_expectation(&vac, Vertex::new(0, 0)).unwrap(), 0.0);
        let full = vac
            .apply_create(lay.mode_index(Vertex::new(1, 0), 0))
            .unwrap()
            .apply_create(lay.mode_index(Vertex::new(1, 0), 1))
            .unwrap();
        assert_eq!(number_expectation(&full, Vertex::new(1, 0)).unwrap(), 2.0);

        let z2 = layout(GroupSpec::Z2, 3, 3);
        let sv = StateVector::prepare(z2.clone(), &StatePrep::staggered_vacuum(&z2)).unwrap();
        assert!((number_expectation(&sv, Vertex::new(1, 0)).unwrap() - 1.0).abs() < 1e-12);
        assert!(number_expectation(&sv, Vertex::new(0, 0)).unwrap() < 1e-12);
    }

    #[test]
    fn plaquette_energy_examples() {
        let lay = layout(GroupSpec::Z2, 2, 2);
        let all_e =
            StateVector::prepare(lay.clone(), &StatePrep::uniform(&lay, LinkState::Element(0), 0))
                .unwrap();
        let c = Couplings::uniform(lay.n_links(), 0.0, 1.0);
        let h = hamiltonian_expectation(&all_e, &c).unwrap();
        assert!((h + 2.0).abs() < 1e-12);

        let zero = Couplings::uniform(lay.n_links(), 0.0, 0.0);
        assert_eq!(hamiltonian_expectation(&all_e, &zero).unwrap(), 0.0);

        let singlets =
            StateVector::prepare(lay.clone(), &StatePrep::uniform(&lay, LinkState::Singlet, 0))
                .unwrap();
        assert!(hamiltonian_expectation(&singlets, &c).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_expectation_is_gauge_invariant() {
        let lay = layout(GroupSpec::S3, 2, 2);
        let s = StateVector::random(lay.clone(), 44);
        let c = Couplings::uniform(lay.n_links(), 0.7, 1.3);
        let h0 = hamiltonian_expectation(&s, &c).unwrap();
        for v in lay.geometry().vertices() {
            for g in 0..lay.group().order() {
                let mut t = s.clone();
                gauss_transform(&mut t, v, g).unwrap();
                let h = hamiltonian_expectation(&t, &c).unwrap();
                assert!((h - h0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn wilson_loop_used_by_hamiltonian_matches_plaquette_convention() {
        // H_B on the all-identity state equals -2 per plaquette
        let lay = layout(GroupSpec::Z2, 3, 2);
        let all_e =
            StateVector::prepare(lay.clone(), &StatePrep::uniform(&lay, LinkState::Element(0), 0))
                .unwrap();
        let c = Couplings::uniform(lay.n_links(), 0.0, 1.0);
        let h = hamiltonian_expectation(&all_e, &c).unwrap();
        assert!((h + 4.0).abs() < 1e-12); // two plaquettes

        let lp = rectangle_loop(lay.geometry(), Vertex::new(0, 0), 1, 1).unwrap();
        let w = wilson_expectation(&all_e, &lp).unwrap();
        assert!((w - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }
}
