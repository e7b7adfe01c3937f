//! One-command verification of the embedded invariants: group axioms,
//! fermionic anticommutation, rotation conjugation, and the loop stator
//! relation, each reported as a pass/fail line.

use std::sync::Arc;

use gaugeloop::group::{build_group, GroupSpec};
use gaugeloop::hilbert::{build_layout, HilbertLayout, StateVector};
use gaugeloop::lattice::{build_lattice, rectangle_loop, Boundary, Vertex};
use gaugeloop::protocols::{
    gate_rotate, measure_wilson, readout_number_diff, stator_residual,
};
use gaugeloop::schedule::Axis;
use num_complex::Complex64;

fn report(name: &str, ok: bool, detail: &str) -> bool {
    println!("[selftest] {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn physical(spec: GroupSpec, lx: usize, ly: usize) -> Arc<HilbertLayout> {
    let g = build_group(&spec).unwrap();
    let geom = build_lattice(lx, ly, Boundary::Open).unwrap();
    Arc::new(build_layout(g, geom, false).unwrap())
}

pub fn run() -> bool {
    let mut ok = true;

    for spec in [GroupSpec::Z2, GroupSpec::Z3, GroupSpec::Zn(5), GroupSpec::S3] {
        let g = build_group(&spec).unwrap();
        let axioms = g.check_axioms().is_ok();
        let residual = g.representation_residual();
        ok &= report(
            &format!("group axioms and representation ({})", g.name()),
            axioms && residual < 1e-12,
            &format!("rep residual {residual:.2e}"),
        );
    }

    // exhaustive anticommutation on a 4-mode layout
    let small = physical(GroupSpec::Z2, 2, 2);
    let mut anticommute = true;
    for i in 0..small.total_dim() {
        let e = StateVector::basis(small.clone(), i);
        for m in 0..4 {
            for n in 0..4 {
                let mut acc = e.apply_create(n).unwrap().apply_annihilate(m).unwrap();
                let other = e.apply_annihilate(m).unwrap().apply_create(n).unwrap();
                acc.add_scaled(&other, Complex64::new(1.0, 0.0));
                if m == n {
                    acc.add_scaled(&e, Complex64::new(-1.0, 0.0));
                }
                anticommute &= acc.norm() == 0.0;
            }
        }
    }
    ok &= report(
        "fermionic anticommutation (exhaustive, 4 modes)",
        anticommute,
        "256 basis states x 16 mode pairs",
    );

    // rotation conjugation: number difference after the rotation equals
    // the hopping expectation before it
    let full = {
        let g = build_group(&GroupSpec::Z2).unwrap();
        let geom = build_lattice(2, 2, Boundary::Open).unwrap();
        Arc::new(build_layout(g, geom, true).unwrap())
    };
    let v = Vertex::new(0, 0);
    let s = StateVector::random(full.clone(), 5);
    let mut rotated = s.clone();
    gate_rotate(&mut rotated, v, Axis::Y).unwrap();
    let lhs = readout_number_diff(&rotated, v).unwrap();
    let p = full.mode_index(v, 0);
    let q = full.chi_mode(0).unwrap();
    let mut hop = StateVector::zero(full.clone());
    s.accumulate_bilinear(&mut hop, p, q, |_| Complex64::new(1.0, 0.0)).unwrap();
    s.accumulate_bilinear(&mut hop, q, p, |_| Complex64::new(1.0, 0.0)).unwrap();
    let rhs = s.inner(&hop).unwrap();
    let rot_diff = (lhs - rhs.re).abs();
    ok &= report(
        "endpoint rotation conjugation",
        rot_diff < 1e-12,
        &format!("residual {rot_diff:.2e}"),
    );

    // stator eigenoperator relation for one Abelian and one non-Abelian case
    for (spec, label) in [(GroupSpec::Z2, "Z2 2x2"), (GroupSpec::S3, "S3 2x2")] {
        let lay = physical(spec, 2, 2);
        let lp = rectangle_loop(lay.geometry(), Vertex::new(0, 0), 1, 1).unwrap();
        let s = StateVector::random(lay, 7);
        let r = stator_residual(&s, &lp).unwrap();
        ok &= report(
            &format!("stator relation ({label})"),
            r < 1e-12,
            &format!("residual {r:.2e}"),
        );
    }

    // protocol vs oracle smoke test
    let lay = physical(GroupSpec::Z3, 2, 2);
    let lp = rectangle_loop(lay.geometry(), Vertex::new(0, 0), 1, 1).unwrap();
    let s = StateVector::random(lay, 11);
    let r = measure_wilson(&s, &lp, true).unwrap();
    let d = r.abs_diff.unwrap();
    ok &= report(
        "wilson protocol vs oracle (Z3 2x2)",
        d < 1e-10,
        &format!("|diff| {d:.2e}"),
    );

    println!("[selftest] {}", if ok { "ALL PASS" } else { "FAILURES PRESENT" });
    ok
}
