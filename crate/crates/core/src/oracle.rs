//! Direct construction of the nonlocal string operators — the ground
//! truth every protocol run is checked against.
//!
//! Both the Wilson loop and the meson string are built from the link
//! operators U, which are diagonal in the group element basis, so their
//! action factors into a per-configuration coefficient matrix
//! `P({g}) = E(1) E(2) ... E(L)` (step 1 leftmost, `E = D(g)` on forward
//! steps and `D(g)^dagger` on reversed ones) times a fermionic bilinear.
//!
//! A second, deliberately naive full-matrix build is provided in [`dense`]
//! for small layouts; the two implementations share no kernel code.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{HilbertLayout, StateVector};
use crate::lattice::{LoopSpec, Orientation, PathSpec, PathStep};

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
const C_ONE: Complex64 = Complex64::new(1.0, 0.0);
const C_I: Complex64 = Complex64::new(0.0, 1.0);

/// Which Hermitian combination of the string operator to evaluate:
/// the bare (non-Hermitian) string, M = bare + h.c., or
/// M' = -i(bare - h.c.).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MesonOp {
    Script,
    M,
    MPrime,
}

impl fmt::Display for MesonOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MesonOp::Script => write!(f, "script"),
            MesonOp::M => write!(f, "M"),
            MesonOp::MPrime => write!(f, "Mprime"),
        }
    }
}

impl FromStr for MesonOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "script" => Ok(MesonOp::Script),
            "M" => Ok(MesonOp::M),
            "Mprime" | "M'" => Ok(MesonOp::MPrime),
            other => Err(Error::BadStateSpec(format!(
                "unknown meson operator `{other}` (expected script, M or Mprime)"
            ))),
        }
    }
}

/// Oriented representation matrix of one path step for a given link digit.
fn step_entry(
    layout: &HilbertLayout,
    step: &PathStep,
    g: usize,
    m: usize,
    n: usize,
) -> Complex64 {
    match step.orient {
        Orientation::Forward => layout.group().rep_entry(g, m, n),
        Orientation::Reverse => layout.group().rep_dagger_entry(g, m, n),
    }
}

/// Flat table of the ordered product matrix per qudit configuration:
/// entry `q * d^2 + m * d + n` is `P({g}(q))_{mn}`.
pub fn string_table(layout: &HilbertLayout, steps: &[PathStep]) -> Vec<Complex64> {
    let d = layout.comps();
    let d2 = d * d;
    let qcount = layout.qudit_configs();
    let order = layout.group().order();
    let mut table = vec![C_ZERO; qcount * d2];
    let strides: Vec<usize> = steps
        .iter()
        .map(|s| layout.qudit_stride(layout.link_qudit(s.link)) >> layout.n_modes())
        .collect();
    let mut acc = vec![C_ZERO; d2];
    let mut next = vec![C_ZERO; d2];
    for q in 0..qcount {
        // start from the identity and right-multiply along the path
        acc.iter_mut().enumerate().for_each(|(i, v)| {
            *v = if i % d == i / d { C_ONE } else { C_ZERO };
        });
        for (step, stride) in steps.iter().zip(strides.iter()) {
            let g = (q / stride) % order;
            for m in 0..d {
                for n in 0..d {
                    let mut s = C_ZERO;
                    for k in 0..d {
                        s += acc[m * d + k] * step_entry(layout, step, g, k, n);
                    }
                    next[m * d + n] = s;
                }
            }
            std::mem::swap(&mut acc, &mut next);
        }
        table[q * d2..(q + 1) * d2].copy_from_slice(&acc);
    }
    table
}

fn trace_table(layout: &HilbertLayout, steps: &[PathStep]) -> Vec<Complex64> {
    let d = layout.comps();
    let full = string_table(layout, steps);
    (0..layout.qudit_configs())
        .map(|q| (0..d).map(|m| full[q * d * d + m * d + m]).sum())
        .collect()
}

/// <psi| Tr P(C) |psi>, the Wilson loop expectation.
pub fn wilson_expectation(state: &StateVector, lp: &LoopSpec) -> Result<Complex64> {
    let layout = state.layout();
    let traces = trace_table(layout, lp.steps());
    let m = layout.n_modes();
    let mut total = C_ZERO;
    for (chunk_id, chunk) in state.amps().chunks(4096).enumerate() {
        let mut acc = C_ZERO;
        for (off, a) in chunk.iter().enumerate() {
            let i = chunk_id * 4096 + off;
            acc += traces[i >> m] * Complex64::new(a.norm_sqr(), 0.0);
        }
        total += acc;
    }
    Ok(total)
}

/// Tr P(C) |psi> (diagonal, generally not unitary).
pub fn wilson_apply(state: &StateVector, lp: &LoopSpec) -> Result<StateVector> {
    let layout = state.layout();
    let traces = trace_table(layout, lp.steps());
    let m = layout.n_modes();
    let mut out = state.clone();
    for (i, a) in out.amps_mut().iter_mut().enumerate() {
        *a *= traces[i >> m];
    }
    Ok(out)
}

/// The untraced matrix entry W_mn(C) |psi>; base-point dependent for
/// non-Abelian groups, used only for the eigenoperator-relation check.
pub fn wilson_entry_apply(
    state: &StateVector,
    lp: &LoopSpec,
    m: usize,
    n: usize,
) -> Result<StateVector> {
    let layout = state.layout();
    let d = layout.comps();
    let table = string_table(layout, lp.steps());
    let nm = layout.n_modes();
    let mut out = state.clone();
    for (i, a) in out.amps_mut().iter_mut().enumerate() {
        *a *= table[(i >> nm) * d * d + m * d + n];
    }
    Ok(out)
}

/// String operator applied to a state:
/// bare = psi+_m(x) P_mn psi_n(y), or the chosen Hermitian combination.
pub fn meson_apply(state: &StateVector, path: &PathSpec, op: MesonOp) -> Result<StateVector> {
    let layout: &Arc<HilbertLayout> = state.layout();
    path.check_string(layout.geometry())?;
    let d = layout.comps();
    let d2 = d * d;
    let table = string_table(layout, path.steps());
    let nm = layout.n_modes();
    let (x, y) = (path.start(), path.end());
    let mut out = StateVector::zero(layout.clone());
    let (bare_w, dag_w) = match op {
        MesonOp::Script => (Some(C_ONE), None),
        MesonOp::M => (Some(C_ONE), Some(C_ONE)),
        MesonOp::MPrime => (Some(-C_I), Some(C_I)),
    };
    for m in 0..d {
        for n in 0..d {
            let p_x = layout.mode_index(x, m);
            let q_y = layout.mode_index(y, n);
            if let Some(w) = bare_w {
                state.accumulate_bilinear(&mut out, p_x, q_y, |i| {
                    w * table[(i >> nm) * d2 + m * d + n]
                })?;
            }
            if let Some(w) = dag_w {
                state.accumulate_bilinear(&mut out, q_y, p_x, |i| {
                    w * table[(i >> nm) * d2 + m * d + n].conj()
                })?;
            }
        }
    }
    Ok(out)
}

pub fn meson_expectation(state: &StateVector, path: &PathSpec, op: MesonOp) -> Result<Complex64> {
    let applied = meson_apply(state, path, op)?;
    state.inner(&applied)
}

/// Naive full-matrix second tier. Everything here works on explicit
/// row-major dim x dim matrices built column by column from an
/// occupation-list picture of the basis states; no strided kernels.
pub mod dense {
    use super::*;
    use crate::lattice::LoopSpec;

    pub const DENSE_GUARD: usize = 1 << 12;

    fn check_dim(layout: &HilbertLayout) -> Result<usize> {
        let dim = layout.total_dim();
        if dim > DENSE_GUARD {
            return Err(Error::DenseOracleTooLarge {
                required: dim,
                allowed: DENSE_GUARD,
            });
        }
        Ok(dim)
    }

    /// Link digits of a basis index, by repeated division.
    fn digits(layout: &HilbertLayout, index: usize) -> Vec<usize> {
        let order = layout.group().order();
        let mut q = index >> layout.n_modes();
        (0..layout.n_qudits())
            .map(|_| {
                let g = q % order;
                q /= order;
                g
            })
            .collect()
    }

    fn occupations(layout: &HilbertLayout, index: usize) -> Vec<bool> {
        (0..layout.n_modes()).map(|k| (index >> k) & 1 == 1).collect()
    }

    fn mat_mul(a: &[Complex64], b: &[Complex64], d: usize) -> Vec<Complex64> {
        let mut out = vec![C_ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                let mut acc = C_ZERO;
                for k in 0..d {
                    acc += a[r * d + k] * b[k * d + c];
                }
                out[r * d + c] = acc;
            }
        }
        out
    }

    fn path_product(layout: &HilbertLayout, steps: &[PathStep], digits: &[usize]) -> Vec<Complex64> {
        let d = layout.comps();
        let mut acc: Vec<Complex64> = (0..d * d)
            .map(|i| if i % d == i / d { C_ONE } else { C_ZERO })
            .collect();
        for step in steps {
            let g = digits[layout.link_qudit(step.link)];
            let e: Vec<Complex64> = match step.orient {
                Orientation::Forward => layout.group().rep(g).to_vec(),
                Orientation::Reverse => layout.group().rep(layout.group().inv(g)).to_vec(),
            };
            acc = mat_mul(&acc, &e, d);
        }
        acc
    }

    /// Annihilate `mode` in an occupation list; returns the sign or None.
    fn take(occ: &mut [bool], mode: usize) -> Option<f64> {
        if !occ[mode] {
            return None;
        }
        let swaps = occ[..mode].iter().filter(|&&b| b).count();
        occ[mode] = false;
        Some(if swaps % 2 == 0 { 1.0 } else { -1.0 })
    }

    fn put(occ: &mut [bool], mode: usize) -> Option<f64> {
        if occ[mode] {
            return None;
        }
        let swaps = occ[..mode].iter().filter(|&&b| b).count();
        occ[mode] = true;
        Some(if swaps % 2 == 0 { 1.0 } else { -1.0 })
    }

    fn pack(layout: &HilbertLayout, qpart: usize, occ: &[bool]) -> usize {
        let mut f = 0usize;
        for (k, &b) in occ.iter().enumerate() {
            if b {
                f |= 1 << k;
            }
        }
        (qpart << layout.n_modes()) | f
    }

    /// Dense matrix of the Wilson loop operator (diagonal).
    pub fn wilson_matrix(layout: &HilbertLayout, lp: &LoopSpec) -> Result<Vec<Complex64>> {
        let dim = check_dim(layout)?;
        let d = layout.comps();
        let mut mat = vec![C_ZERO; dim * dim];
        for j in 0..dim {
            let digs = digits(layout, j);
            let p = path_product(layout, lp.steps(), &digs);
            let tr: Complex64 = (0..d).map(|m| p[m * d + m]).sum();
            mat[j * dim + j] = tr;
        }
        Ok(mat)
    }

    /// Dense matrix of the chosen string operator.
    pub fn meson_matrix(
        layout: &HilbertLayout,
        path: &PathSpec,
        op: MesonOp,
    ) -> Result<Vec<Complex64>> {
        let dim = check_dim(layout)?;
        path.check_string(layout.geometry())?;
        let d = layout.comps();
        let (x, y) = (path.start(), path.end());
        let mut bare = vec![C_ZERO; dim * dim];
        for j in 0..dim {
            let digs = digits(layout, j);
            let p = path_product(layout, path.steps(), &digs);
            let qpart = j >> layout.n_modes();
            for n in 0..d {
                for m in 0..d {
                    let mut occ = occupations(layout, j);
                    let Some(s1) = take(&mut occ, layout.mode_index(y, n)) else {
                        continue;
                    };
                    let Some(s2) = put(&mut occ, layout.mode_index(x, m)) else {
                        continue;
                    };
                    let i = pack(layout, qpart, &occ);
                    bare[i * dim + j] += p[m * d + n] * (s1 * s2);
                }
            }
        }
        match op {
            MesonOp::Script => Ok(bare),
            MesonOp::M | MesonOp::MPrime => {
                let mut out = vec![C_ZERO; dim * dim];
                for r in 0..dim {
                    for c in 0..dim {
                        let b = bare[r * dim + c];
                        let bd = bare[c * dim + r].conj();
                        out[r * dim + c] = match op {
                            MesonOp::M => b + bd,
                            MesonOp::MPrime => -C_I * (b - bd),
                            MesonOp::Script => unreachable!(),
                        };
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn apply(mat: &[Complex64], state: &StateVector) -> StateVector {
        let dim = state.dim();
        let mut out = StateVector::zero(state.layout().clone());
        for r in 0..dim {
            let mut acc = C_ZERO;
            let row = &mat[r * dim..(r + 1) * dim];
            for (c, a) in state.amps().iter().enumerate() {
                acc += row[c] * a;
            }
            out.amps_mut()[r] = acc;
        }
        out
    }

    pub fn expectation(mat: &[Complex64], state: &StateVector) -> Complex64 {
        state
            .inner(&apply(mat, state))
            .expect("same layout by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge_ops::gauss_transform;
    use crate::group::{build_group, GroupSpec};
    use crate::hilbert::{build_layout, LinkState, StatePrep};
    use crate::lattice::{build_lattice, rectangle_loop, shortest_path, Boundary, Vertex};

    fn layout(spec: GroupSpec, lx: usize, ly: usize) -> Arc<HilbertLayout> {
        let g = build_group(&spec).unwrap();
        let geom = build_lattice(lx, ly, Boundary::Open).unwrap();
        Arc::new(build_layout(g, geom, false).unwrap())
    }

    #[test]
    fn wilson_on_product_states() {
        let lay = layout(GroupSpec::Z2, 2, 2);
        let lp = rectangle_loop(lay.geometry(), Vertex::new(0, 0), 1, 1).unwrap();

        let all_e =
            StateVector::prepare(lay.clone(), &StatePrep::uniform(&lay, LinkState::Element(0), 0))
                .unwrap();
        assert!((wilson_expectation(&all_e, &lp).unwrap() - C_ONE).norm() < 1e-14);

        let mut prep = StatePrep::uniform(&lay, LinkState::Element(0), 0);
        prep.links[0] = LinkState::Element(1);
        let one_a = StateVector::prepare(lay.clone(), &prep).unwrap();
        assert!((wilson_expectation(&one_a, &lp).unwrap() + C_ONE).norm() < 1e-14);

        let singlets =
            StateVector::prepare(lay.clone(), &StatePrep::uniform(&lay, LinkState::Singlet, 0))
                .unwrap();
        assert!(wilson_expectation(&singlets, &lp).unwrap().norm() < 1e-14);
    }

    #[test]
    fn meson_on_prepared_states() {
        let lay = layout(GroupSpec::Z2, 2, 1);
        let geom = lay.geometry();
        let x = Vertex::new(0, 0);
        let y = Vertex::new(1, 0);
        let path = shortest_path(geom, x, y).unwrap();
        let vac = StateVector::basis(lay.clone(), 0);

        // psi+(x)|Omega>: the string annihilates at y
        let psix = vac.apply_create(lay.mode_index(x, 0)).unwrap();
        assert!(meson_expectation(&psix, &path, MesonOp::Script)
            .unwrap()
            .norm()
            < 1e-14);

        // (psi+(x) + psi+(y))/sqrt(2) with the link at the identity
        let mut sup = psix.clone();
        sup.add_scaled(&vac.apply_create(lay.mode_index(y, 0)).unwrap(), C_ONE);
        sup.scale(Complex64::new(1.0 / 2f64.sqrt(), 0.0));
        let m = meson_expectation(&sup, &path, MesonOp::M).unwrap();
        assert!((m - C_ONE).norm() < 1e-13);

        // same state but the link in |a>: extra D(a) = -1
        let mut with_a = StateVector::zero(lay.clone());
        let stride = lay.qudit_stride(0);
        for i in 0..lay.fermion_dim() {
            with_a.amps_mut()[i + stride] = sup.amps()[i];
        }
        let m = meson_expectation(&with_a, &path, MesonOp::M).unwrap();
        assert!((m + C_ONE).norm() < 1e-13);
    }

    #[test]
    fn hermitian_combinations_are_real_and_reconstruct_script() {
        for spec in [GroupSpec::Z3, GroupSpec::S3] {
            let lay = layout(spec, 2, 2);
            let path = shortest_path(lay.geometry(), Vertex::new(0, 0), Vertex::new(1, 1)).unwrap();
            let s = StateVector::random(lay, 42);
            let m = meson_expectation(&s, &path, MesonOp::M).unwrap();
            let mp = meson_expectation(&s, &path, MesonOp::MPrime).unwrap();
            assert!(m.im.abs() < 1e-12);
            assert!(mp.im.abs() < 1e-12);
            let script = meson_expectation(&s, &path, MesonOp::Script).unwrap();
            let recon = 0.5 * (m + C_I * mp);
            assert!((script - recon).norm() < 1e-12);
        }
    }

    #[test]
    fn loop_base_point_is_irrelevant() {
        let lay = layout(GroupSpec::S3, 2, 2);
        let lp = rectangle_loop(lay.geometry(), Vertex::new(0, 0), 1, 1).unwrap();
        let s = StateVector::random(lay.clone(), 3);
        let base = wilson_expectation(&s, &lp).unwrap();
        for k in 1..lp.len() {
            let rot = lp.rotated(lay.geometry(), k);
            let v = wilson_expectation(&s, &rot).unwrap();
            assert!((v - base).norm() < 1e-12);
        }
    }

    #[test]
    fn expectations_are_gauge_invariant() {
        for spec in [GroupSpec::Z2, GroupSpec::S3] {
            let lay = layout(spec, 2, 2);
            let geom = lay.geometry().clone();
            let lp = rectangle_loop(&geom, Vertex::new(0, 0), 1, 1).unwrap();
            let path = shortest_path(&geom, Vertex::new(0, 0), Vertex::new(1, 1)).unwrap();
            let s = StateVector::random(lay.clone(), 17);
            let w0 = wilson_expectation(&s, &lp).unwrap();
            let m0 = meson_expectation(&s, &path, MesonOp::Script).unwrap();
            for v in geom.vertices() {
                for g in 0..lay.group().order() {
                    let mut t = s.clone();
                    gauss_transform(&mut t, v, g).unwrap();
                    let w = wilson_expectation(&t, &lp).unwrap();
                    let m = meson_expectation(&t, &path, MesonOp::Script).unwrap();
                    assert!((w - w0).norm() < 1e-10, "wilson at {v} g={g}");
                    assert!((m - m0).norm() < 1e-10, "meson at {v} g={g}");
                }
            }
        }
    }

    #[test]
    fn dense_tier_agrees_with_primary() {
        // Z2 and Z3 with a loop; S3 on a two-vertex lattice for the meson
        for (spec, lx, ly) in [(GroupSpec::Z2, 2, 2), (GroupSpec::Z3, 2, 2)] {
            let lay = layout(spec, lx, ly);
            let lp = rectangle_loop(lay.geometry(), Vertex::new(0, 0), 1, 1).unwrap();
            let s = StateVector::random(lay.clone(), 23);
            let fast = wilson_expectation(&s, &lp).unwrap();
            let mat = dense::wilson_matrix(&lay, &lp).unwrap();
            let slow = dense::expectation(&mat, &s);
            assert!((fast - slow).norm() < 1e-12);

            let path = shortest_path(lay.geometry(), Vertex::new(0, 0), Vertex::new(1, 1)).unwrap();
            for op in [MesonOp::Script, MesonOp::M, MesonOp::MPrime] {
                let fast = meson_apply(&s, &path, op).unwrap();
                let mat = dense::meson_matrix(&lay, &path, op).unwrap();
                let slow = dense::apply(&mat, &s);
                assert!(fast.distance(&slow).unwrap() < 1e-12);
            }
        }
        // non-Abelian meson with spinor components
        let lay = layout(GroupSpec::S3, 2, 1);
        let path = shortest_path(lay.geometry(), Vertex::new(0, 0), Vertex::new(1, 0)).unwrap();
        let s = StateVector::random(lay.clone(), 29);
        for op in [MesonOp::Script, MesonOp::M, MesonOp::MPrime] {
            let fast = meson_apply(&s, &path, op).unwrap();
            let mat = dense::meson_matrix(&lay, &path, op).unwrap();
            let slow = dense::apply(&mat, &s);
            assert!(fast.distance(&slow).unwrap() < 1e-12, "{op}");
        }
    }

    #[test]
    fn dense_tier_guards_dimension() {
        let lay = layout(GroupSpec::S3, 2, 2); // 6^4 * 2^8 > 2^12
        let lp = rectangle_loop(lay.geometry(), Vertex::new(0, 0), 1, 1).unwrap();
        assert!(matches!(
            dense::wilson_matrix(&lay, &lp),
            Err(Error::DenseOracleTooLarge { .. })
        ));
    }
}
