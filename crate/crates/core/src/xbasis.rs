//! The Z2 pipeline in the conjugate link basis, where the group element
//! operator is sigma_x instead of our diagonal convention. Conjugating
//! every link qubit and the ancilla by the Hadamard rotation maps one
//! pipeline onto the other; the gates here are built independently from
//! that convention's closed forms, so agreement of the two pipelines is
//! a genuine equivalence check.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::StateVector;
use crate::lattice::{LoopSpec, PathSpec};
use crate::oracle::MesonOp;
use crate::protocols::{gate_rotate, gate_swap, readout_number_diff};
use crate::schedule::Axis;

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

fn require_z2(state: &StateVector, what: &'static str) -> Result<()> {
    if state.layout().group().order() == 2 && state.layout().group().rep_dim() == 1 {
        Ok(())
    } else {
        Err(Error::RequiresZ2(what))
    }
}

fn hadamard() -> [Complex64; 4] {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [h, h, h, -h]
}

/// Rotates every link qubit of a physical state into the sigma_x basis.
pub fn to_x_basis(state: &StateVector) -> Result<StateVector> {
    require_z2(state, "x-basis pipeline")?;
    let mut out = state.clone();
    let h = hadamard();
    for l in 0..state.layout().n_links() {
        out.apply_qudit_op(&h, &[state.layout().link_qudit(l)])?;
    }
    Ok(out)
}

/// The x-basis entangler: project the link onto the sigma_x eigenbasis
/// and phase the ancilla with sigma_z on the down branch. Self-adjoint;
/// for Z2 the link orientation carries no meaning.
fn entangle_x_matrix() -> Vec<Complex64> {
    let half = Complex64::new(0.5, 0.0);
    let p_plus = [half, half, half, half];
    let p_minus = [half, -half, -half, half];
    let id = [C_ONE, C_ZERO, C_ZERO, C_ONE];
    let sz = [C_ONE, C_ZERO, C_ZERO, -C_ONE];
    let mut out = vec![C_ZERO; 16];
    for r_l in 0..2 {
        for c_l in 0..2 {
            for r_a in 0..2 {
                for c_a in 0..2 {
                    // block index convention: subs[0] (the link) is the
                    // most significant digit
                    out[(r_l * 2 + r_a) * 4 + (c_l * 2 + c_a)] = p_plus[r_l * 2 + c_l]
                        * id[r_a * 2 + c_a]
                        + p_minus[r_l * 2 + c_l] * sz[r_a * 2 + c_a];
                }
            }
        }
    }
    out
}

/// Measures the Wilson loop in the x-basis convention: ancilla prepared
/// in |+>, x-basis entanglers along the loop, sigma_x readout.
pub fn measure_wilson_x(state_x: &StateVector, lp: &LoopSpec) -> Result<Complex64> {
    require_z2(state_x, "x-basis Wilson measurement")?;
    let layout = state_x.layout();
    let full = std::sync::Arc::new(crate::hilbert::build_layout(
        layout.group().clone(),
        layout.geometry().clone(),
        true,
    )?);
    let mut reg = state_x.embed(full.clone())?;
    let anc = full.ancilla_qudit(0)?;
    reg.apply_qudit_op(&hadamard(), &[anc])?; // |e> -> |+>
    let gate = entangle_x_matrix();
    for s in lp.steps().iter().rev() {
        reg.apply_qudit_op(&gate, &[full.link_qudit(s.link), anc])?;
    }
    // <sigma_x~>
    let mut flipped = reg.clone();
    flipped.apply_qudit_permutation(anc, &[1, 0])?;
    reg.inner(&flipped)
}

/// Measures M or M' in the x-basis convention. The de-gauging step is
/// exp(i pi n_chi (1 - sigma_x)/2): flip the link qubit wherever the chi
/// mode is occupied.
pub fn measure_meson_x(state_x: &StateVector, path: &PathSpec, which: MesonOp) -> Result<Complex64> {
    require_z2(state_x, "x-basis string measurement")?;
    let axis = match which {
        MesonOp::M => Axis::Y,
        MesonOp::MPrime => Axis::X,
        MesonOp::Script => {
            return Err(Error::BadStateSpec(
                "combine separate M and Mprime runs for the bare string".into(),
            ))
        }
    };
    let layout = state_x.layout();
    let full = std::sync::Arc::new(crate::hilbert::build_layout(
        layout.group().clone(),
        layout.geometry().clone(),
        true,
    )?);
    let mut reg = state_x.embed(full.clone())?;
    let (x, y) = (path.start(), path.end());
    gate_swap(&mut reg, y)?;
    let chi = full.chi_mode(0)?;
    let sx = [C_ZERO, C_ONE, C_ONE, C_ZERO];
    for s in path.steps().iter().rev() {
        reg.apply_mode_controlled_qudit_op(chi, full.link_qudit(s.link), &sx)?;
    }
    gate_rotate(&mut reg, x, axis)?;
    Ok(Complex64::new(readout_number_diff(&reg, x)?, 0.0))
}

/// Direct x-basis Wilson oracle: the product of sigma_x over the loop.
pub fn wilson_oracle_x(state_x: &StateVector, lp: &LoopSpec) -> Result<Complex64> {
    require_z2(state_x, "x-basis Wilson oracle")?;
    let layout = state_x.layout();
    let mut flipped = state_x.clone();
    for s in lp.steps() {
        flipped.apply_qudit_permutation(layout.link_qudit(s.link), &[1, 0])?;
    }
    state_x.inner(&flipped)
}
