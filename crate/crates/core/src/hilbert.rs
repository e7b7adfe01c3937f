//! Composite Hilbert space layout, dense state vectors, and the kernels
//! that apply local qudit operators and fermionic bilinears.
//!
//! A basis index factors as `i = q * 2^M + f` where `f` holds one
//! occupation bit per fermionic mode (bit k = mode k) and `q` is the
//! mixed-radix configuration of the link qudits (digit j has place value
//! |G|^j, link 0 least significant, ancilla qudits above all links).
//! Fermionic modes are ordered vertex-major, component-minor, with the
//! ancilla chi modes appended last; every sign string is taken with
//! respect to this one global order.

use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::group::FiniteGroup;
use crate::lattice::{LatticeGeometry, Vertex};

/// Desk-scale guard on the total dimension.
pub const DIMENSION_GUARD: u64 = 1 << 24;

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug)]
pub struct HilbertLayout {
    group: FiniteGroup,
    geometry: LatticeGeometry,
    n_ancillas: usize,
    with_chi: bool,
    n_modes: usize,
    fdim: usize,
    qpow: Vec<usize>,
    total: usize,
}

/// One qudit of dimension |G| per link plus `with_ancilla` ancilla
/// machinery: one movable ancilla qudit and one chi multiplet.
pub fn build_layout(
    group: FiniteGroup,
    geometry: LatticeGeometry,
    with_ancilla: bool,
) -> Result<HilbertLayout> {
    let n = if with_ancilla { 1 } else { 0 };
    HilbertLayout::custom(group, geometry, n, with_ancilla)
}

impl HilbertLayout {
    /// General constructor; more than one ancilla qudit is only used for
    /// parallel-loop runs.
    pub fn custom(
        group: FiniteGroup,
        geometry: LatticeGeometry,
        n_ancillas: usize,
        with_chi: bool,
    ) -> Result<HilbertLayout> {
        let d = group.rep_dim();
        let n_qudits = geometry.link_count() + n_ancillas;
        let n_modes = geometry.vertex_count() * d + if with_chi { d } else { 0 };
        let mut required: u128 = 1u128 << n_modes;
        for _ in 0..n_qudits {
            required = required.saturating_mul(group.order() as u128);
        }
        if required > DIMENSION_GUARD as u128 {
            return Err(Error::DimensionGuard {
                required,
                allowed: DIMENSION_GUARD,
            });
        }
        let fdim = 1usize << n_modes;
        let mut qpow = Vec::with_capacity(n_qudits + 1);
        let mut p = 1usize;
        for _ in 0..=n_qudits {
            qpow.push(p);
            p = p.saturating_mul(group.order());
        }
        let total = qpow[n_qudits] * fdim;
        Ok(HilbertLayout {
            group,
            geometry,
            n_ancillas,
            with_chi,
            n_modes,
            fdim,
            qpow,
            total,
        })
    }

    pub fn group(&self) -> &FiniteGroup {
        &self.group
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn n_links(&self) -> usize {
        self.geometry.link_count()
    }

    pub fn n_ancilla_qudits(&self) -> usize {
        self.n_ancillas
    }

    pub fn n_qudits(&self) -> usize {
        self.n_links() + self.n_ancillas
    }

    pub fn has_chi(&self) -> bool {
        self.with_chi
    }

    /// Components per vertex (= matter irrep dimension).
    pub fn comps(&self) -> usize {
        self.group.rep_dim()
    }

    pub fn n_matter_modes(&self) -> usize {
        self.geometry.vertex_count() * self.comps()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn fermion_dim(&self) -> usize {
        self.fdim
    }

    pub fn link_qudit(&self, link: usize) -> usize {
        debug_assert!(link < self.n_links());
        link
    }

    pub fn ancilla_qudit(&self, k: usize) -> Result<usize> {
        if k < self.n_ancillas {
            Ok(self.n_links() + k)
        } else {
            Err(Error::MissingAncilla)
        }
    }

    pub fn mode_index(&self, v: Vertex, comp: usize) -> usize {
        self.geometry.vertex_index(v) * self.comps() + comp
    }

    pub fn chi_mode(&self, comp: usize) -> Result<usize> {
        if self.with_chi {
            Ok(self.n_matter_modes() + comp)
        } else {
            Err(Error::MissingChiModes)
        }
    }

    #[inline]
    pub fn qudit_stride(&self, qudit: usize) -> usize {
        self.qpow[qudit] * self.fdim
    }

    #[inline]
    pub fn qudit_digit(&self, index: usize, qudit: usize) -> usize {
        (index / self.qudit_stride(qudit)) % self.group.order()
    }

    /// Qudit configuration part of a basis index (mixed-radix integer).
    #[inline]
    pub fn qudit_part(&self, index: usize) -> usize {
        index >> self.n_modes
    }

    pub fn qudit_configs(&self) -> usize {
        self.qpow[self.n_qudits()]
    }

    #[inline]
    pub fn mode_occupied(&self, index: usize, mode: usize) -> bool {
        (index >> mode) & 1 == 1
    }

    pub fn check_qudit(&self, qudit: usize) -> Result<()> {
        if qudit < self.n_qudits() {
            Ok(())
        } else {
            Err(Error::QuditOutOfRange(qudit, self.n_qudits()))
        }
    }

    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.n_modes {
            Ok(())
        } else {
            Err(Error::ModeOutOfRange(mode, self.n_modes))
        }
    }

    pub fn descriptor(&self) -> String {
        format!(
            "group={} lattice={} ancillas={} chi={} dim={}",
            self.group.name(),
            self.geometry.descriptor(),
            self.n_ancillas,
            self.with_chi,
            self.total
        )
    }

    pub fn compatible(&self, other: &HilbertLayout) -> bool {
        self.group.name() == other.group.name()
            && self.geometry == other.geometry
            && self.n_ancillas == other.n_ancillas
            && self.with_chi == other.with_chi
    }
}

/// Per-link initial state in a product-state prescription.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkState {
    Element(usize),
    /// Uniform superposition over group elements; invariant under both
    /// left and right translations.
    Singlet,
}

/// Product-state prescription: one state per link, one occupation bitmask
/// per vertex (bit m = component m occupied). Ancilla subsystems always
/// start in |e~> and the chi vacuum.
#[derive(Debug, Clone)]
pub struct StatePrep {
    pub links: Vec<LinkState>,
    pub occupations: Vec<u32>,
}

impl StatePrep {
    pub fn uniform(layout: &HilbertLayout, link: LinkState, occ: u32) -> StatePrep {
        StatePrep {
            links: vec![link; layout.n_links()],
            occupations: vec![occ; layout.geometry().vertex_count()],
        }
    }

    /// All links in the singlet, odd-sublattice vertices fully occupied.
    pub fn staggered_vacuum(layout: &HilbertLayout) -> StatePrep {
        let full = (1u32 << layout.comps()) - 1;
        let occupations = layout
            .geometry()
            .vertices()
            .map(|v| if v.parity() == 1 { full } else { 0 })
            .collect();
        StatePrep {
            links: vec![LinkState::Singlet; layout.n_links()],
            occupations,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StateVector {
    layout: Arc<HilbertLayout>,
    amps: Vec<Complex64>,
}

/// Number-conserving two-mode operator `c00 (1-n_p)(1-n_q) + c11 n_p n_q
/// plus aa n_p(1-n_q) + bb n_q(1-n_p) + ab a+_p a_q + ba a+_q a_p`,
/// applied with the sign string between p and q on the transfer terms.
#[derive(Debug, Clone, Copy)]
pub struct PairOp {
    pub c00: Complex64,
    pub c11: Complex64,
    pub aa: Complex64,
    pub ab: Complex64,
    pub ba: Complex64,
    pub bb: Complex64,
}

impl PairOp {
    pub fn adjoint(&self) -> PairOp {
        PairOp {
            c00: self.c00.conj(),
            c11: self.c11.conj(),
            aa: self.aa.conj(),
            ab: self.ba.conj(),
            ba: self.ab.conj(),
            bb: self.bb.conj(),
        }
    }
}

/// Second-quantized lift of a d x d one-particle matrix onto the Fock
/// space of d adjacent modes: <T| lift |S> = det V[T,S] over equal-size
/// ascending index subsets. Row-major 2^d x 2^d, basis ordered by bitmask.
pub fn fock_lift(v: &[Complex64], d: usize) -> Vec<Complex64> {
    let dim = 1usize << d;
    let mut out = vec![C_ZERO; dim * dim];
    let members = |mask: usize| -> Vec<usize> { (0..d).filter(|m| (mask >> m) & 1 == 1).collect() };
    for s in 0..dim {
        let cols = members(s);
        for t in 0..dim {
            let rows = members(t);
            if rows.len() != cols.len() {
                continue;
            }
            let k = rows.len();
            let mut sub = Vec::with_capacity(k * k);
            for &r in &rows {
                for &c in &cols {
                    sub.push(v[r * d + c]);
                }
            }
            out[t * dim + s] = small_det(&sub, k);
        }
    }
    out
}

fn small_det(m: &[Complex64], k: usize) -> Complex64 {
    match k {
        0 => C_ONE,
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => {
            let mut acc = C_ZERO;
            for j in 0..k {
                let mut minor = Vec::with_capacity((k - 1) * (k - 1));
                for r in 1..k {
                    for c in 0..k {
                        if c != j {
                            minor.push(m[r * k + c]);
                        }
                    }
                }
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * m[j] * small_det(&minor, k - 1);
            }
            acc
        }
    }
}

impl StateVector {
    pub fn zero(layout: Arc<HilbertLayout>) -> StateVector {
        let amps = vec![C_ZERO; layout.total_dim()];
        StateVector { layout, amps }
    }

    pub fn basis(layout: Arc<HilbertLayout>, index: usize) -> StateVector {
        let mut s = StateVector::zero(layout);
        s.amps[index] = C_ONE;
        s
    }

    /// Normalized product state from a per-link / per-vertex prescription.
    pub fn prepare(layout: Arc<HilbertLayout>, prep: &StatePrep) -> Result<StateVector> {
        if prep.links.len() != layout.n_links() {
            return Err(Error::BadStateSpec(format!(
                "expected {} link entries, got {}",
                layout.n_links(),
                prep.links.len()
            )));
        }
        if prep.occupations.len() != layout.geometry().vertex_count() {
            return Err(Error::BadStateSpec(format!(
                "expected {} vertex entries, got {}",
                layout.geometry().vertex_count(),
                prep.occupations.len()
            )));
        }
        let q = layout.group().order();
        let d = layout.comps();
        for ls in &prep.links {
            if let LinkState::Element(g) = ls {
                layout.group().check_element(*g)?;
            }
        }
        let mut fmask = 0usize;
        for (vi, occ) in prep.occupations.iter().enumerate() {
            if *occ >= (1u32 << d) {
                return Err(Error::BadStateSpec(format!(
                    "vertex occupation mask {occ} uses more than {d} components"
                )));
            }
            fmask |= (*occ as usize) << (vi * d);
        }

        let mut state = StateVector::zero(layout.clone());
        let singlet_amp = 1.0 / (q as f64).sqrt();
        // Enumerate link configurations only: ancilla digits stay at the
        // identity and chi modes stay empty.
        let n_links = layout.n_links();
        let mut config = vec![0usize; n_links];
        loop {
            let mut amp = 1.0f64;
            let mut ok = true;
            for (l, ls) in prep.links.iter().enumerate() {
                match ls {
                    LinkState::Element(g) => {
                        if config[l] != *g {
                            ok = false;
                            break;
                        }
                    }
                    LinkState::Singlet => amp *= singlet_amp,
                }
            }
            if ok {
                let mut qidx = 0usize;
                for (l, &g) in config.iter().enumerate() {
                    qidx += g * layout.qpow[l];
                }
                state.amps[qidx * layout.fdim + fmask] = Complex64::new(amp, 0.0);
            }
            // odometer over link digits
            let mut l = 0;
            loop {
                if l == n_links {
                    return Ok(state);
                }
                config[l] += 1;
                if config[l] < q {
                    break;
                }
                config[l] = 0;
                l += 1;
            }
        }
    }

    /// Reproducible pseudo-random state: ChaCha8 keyed by the seed,
    /// standard-normal real and imaginary parts, normalized.
    pub fn random(layout: Arc<HilbertLayout>, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = StateVector::zero(layout);
        for a in s.amps.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *a = Complex64::new(re, im);
        }
        s.normalize();
        s
    }

    pub fn layout(&self) -> &Arc<HilbertLayout> {
        &self.layout
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        // chunked accumulation keeps the rounding comfortably below 1e-12
        let mut total = 0.0f64;
        for chunk in self.amps.chunks(4096) {
            let mut acc = 0.0f64;
            for a in chunk {
                acc += a.norm_sqr();
            }
            total += acc;
        }
        total
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.scale(Complex64::new(1.0 / n, 0.0));
        }
    }

    pub fn scale(&mut self, c: Complex64) {
        for a in self.amps.iter_mut() {
            *a *= c;
        }
    }

    pub fn add_scaled(&mut self, other: &StateVector, c: Complex64) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.amps.iter_mut().zip(other.amps.iter()) {
            *a += c * b;
        }
    }

    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if !self.layout.compatible(&other.layout) {
            return Err(Error::LayoutMismatch);
        }
        let mut total = C_ZERO;
        for (ca, cb) in self.amps.chunks(4096).zip(other.amps.chunks(4096)) {
            let mut acc = C_ZERO;
            for (a, b) in ca.iter().zip(cb.iter()) {
                acc += a.conj() * b;
            }
            total += acc;
        }
        Ok(total)
    }

    /// <psi| O |psi> for an operator given as an application closure.
    pub fn expectation_with<F>(&self, op: F) -> Result<Complex64>
    where
        F: FnOnce(&StateVector) -> Result<StateVector>,
    {
        let applied = op(self)?;
        self.inner(&applied)
    }

    pub fn distance(&self, other: &StateVector) -> Result<f64> {
        if !self.layout.compatible(&other.layout) {
            return Err(Error::LayoutMismatch);
        }
        let mut total = 0.0f64;
        for (ca, cb) in self.amps.chunks(4096).zip(other.amps.chunks(4096)) {
            let mut acc = 0.0f64;
            for (a, b) in ca.iter().zip(cb.iter()) {
                acc += (a - b).norm_sqr();
            }
            total += acc;
        }
        Ok(total.sqrt())
    }

    // ---- qudit kernels -------------------------------------------------

    /// Dense operator on an ordered list of qudits. The operator's block
    /// index treats `subs[0]` as the most significant digit.
    pub fn apply_qudit_op(&mut self, mat: &[Complex64], subs: &[usize]) -> Result<()> {
        let q = self.layout.group().order();
        let k = subs.len();
        for (i, s) in subs.iter().enumerate() {
            self.layout.check_qudit(*s)?;
            if subs[..i].contains(s) {
                return Err(Error::DuplicateSubsystem(*s));
            }
        }
        let block = q.pow(k as u32);
        if mat.len() != block * block {
            return Err(Error::ShapeMismatch {
                got: mat.len(),
                want: block * block,
            });
        }
        // offset of each block assignment
        let mut offsets = vec![0usize; block];
        for (b, off) in offsets.iter_mut().enumerate() {
            let mut rem = b;
            for t in (0..k).rev() {
                *off += (rem % q) * self.layout.qudit_stride(subs[t]);
                rem /= q;
            }
        }
        // free coordinates: fermion block, then every qudit not in subs
        let mut free: Vec<(usize, usize)> = vec![(self.layout.fdim, 1)];
        for j in 0..self.layout.n_qudits() {
            if !subs.contains(&j) {
                free.push((q, self.layout.qudit_stride(j)));
            }
        }
        let mut counters = vec![0usize; free.len()];
        let mut base = 0usize;
        let mut tmp = vec![C_ZERO; block];
        let mut res = vec![C_ZERO; block];
        loop {
            for (b, t) in tmp.iter_mut().enumerate() {
                *t = self.amps[base + offsets[b]];
            }
            for (a, r) in res.iter_mut().enumerate() {
                let mut acc = C_ZERO;
                let row = &mat[a * block..(a + 1) * block];
                for (b, t) in tmp.iter().enumerate() {
                    acc += row[b] * t;
                }
                *r = acc;
            }
            for (b, r) in res.iter().enumerate() {
                self.amps[base + offsets[b]] = *r;
            }
            // odometer
            let mut t = 0;
            loop {
                if t == free.len() {
                    return Ok(());
                }
                counters[t] += 1;
                base += free[t].1;
                if counters[t] < free[t].0 {
                    break;
                }
                base -= free[t].0 * free[t].1;
                counters[t] = 0;
                t += 1;
            }
        }
    }

    /// Basis permutation |h> -> |perm[h]> of one qudit.
    pub fn apply_qudit_permutation(&mut self, qudit: usize, perm: &[usize]) -> Result<()> {
        self.layout.check_qudit(qudit)?;
        let q = self.layout.group().order();
        if perm.len() != q {
            return Err(Error::ShapeMismatch {
                got: perm.len(),
                want: q,
            });
        }
        let s = self.layout.qudit_stride(qudit);
        let span = s * q;
        let mut tmp = vec![C_ZERO; q];
        let mut block = 0;
        while block < self.amps.len() {
            for lo in 0..s {
                let base = block + lo;
                for (h, t) in tmp.iter_mut().enumerate() {
                    *t = self.amps[base + h * s];
                }
                for (h, t) in tmp.iter().enumerate() {
                    self.amps[base + perm[h] * s] = *t;
                }
            }
            block += span;
        }
        Ok(())
    }

    /// Controlled qudit permutation: the control digit g selects the
    /// permutation applied to the target qudit.
    pub fn apply_ctrl_permutation(
        &mut self,
        ctrl: usize,
        target: usize,
        perms: &[Vec<usize>],
    ) -> Result<()> {
        self.layout.check_qudit(ctrl)?;
        self.layout.check_qudit(target)?;
        if ctrl == target {
            return Err(Error::DuplicateSubsystem(ctrl));
        }
        let q = self.layout.group().order();
        if perms.len() != q || perms.iter().any(|p| p.len() != q) {
            return Err(Error::ShapeMismatch {
                got: perms.len(),
                want: q,
            });
        }
        let s = self.layout.qudit_stride(target);
        let cs = self.layout.qudit_stride(ctrl);
        let span = s * q;
        let mut tmp = vec![C_ZERO; q];
        let mut block = 0;
        while block < self.amps.len() {
            for lo in 0..s {
                let base = block + lo;
                let g = (base / cs) % q;
                let perm = &perms[g];
                for (h, t) in tmp.iter_mut().enumerate() {
                    *t = self.amps[base + h * s];
                }
                for (h, t) in tmp.iter().enumerate() {
                    self.amps[base + perm[h] * s] = *t;
                }
            }
            block += span;
        }
        Ok(())
    }

    /// Diagonal qudit operator: amplitude times vals[digit].
    pub fn apply_qudit_diag(&mut self, qudit: usize, vals: &[Complex64]) -> Result<()> {
        self.layout.check_qudit(qudit)?;
        let q = self.layout.group().order();
        if vals.len() != q {
            return Err(Error::ShapeMismatch {
                got: vals.len(),
                want: q,
            });
        }
        let s = self.layout.qudit_stride(qudit);
        let span = s * q;
        let mut block = 0;
        while block < self.amps.len() {
            for (h, v) in vals.iter().enumerate() {
                let start = block + h * s;
                for a in &mut self.amps[start..start + s] {
                    *a *= v;
                }
            }
            block += span;
        }
        Ok(())
    }

    pub fn expect_qudit_diag(&self, qudit: usize, vals: &[Complex64]) -> Result<Complex64> {
        self.layout.check_qudit(qudit)?;
        let q = self.layout.group().order();
        if vals.len() != q {
            return Err(Error::ShapeMismatch {
                got: vals.len(),
                want: q,
            });
        }
        let s = self.layout.qudit_stride(qudit);
        let span = s * q;
        let mut weights = vec![0.0f64; q];
        let mut block = 0;
        while block < self.amps.len() {
            for (h, w) in weights.iter_mut().enumerate() {
                let start = block + h * s;
                let mut acc = 0.0;
                for a in &self.amps[start..start + s] {
                    acc += a.norm_sqr();
                }
                *w += acc;
            }
            block += span;
        }
        Ok(weights
            .iter()
            .zip(vals.iter())
            .map(|(w, v)| v * Complex64::new(*w, 0.0))
            .sum())
    }

    // ---- fermionic kernels ---------------------------------------------

    #[inline]
    fn string_sign(&self, index: usize, lo: usize, hi: usize) -> f64 {
        let mask = (1usize << hi).wrapping_sub(1 << (lo + 1));
        if (index & mask).count_ones() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Number-conserving two-mode gate with the global sign string on
    /// the transfer terms.
    pub fn apply_pair_op(&mut self, p: usize, q: usize, op: &PairOp) -> Result<()> {
        self.layout.check_mode(p)?;
        self.layout.check_mode(q)?;
        if p == q {
            return Err(Error::DuplicateSubsystem(p));
        }
        let (lo, hi) = (p.min(q), p.max(q));
        let pb = 1usize << p;
        let qb = 1usize << q;
        let both = pb | qb;
        for i in 0..self.amps.len() {
            let has_p = i & pb != 0;
            let has_q = i & qb != 0;
            match (has_p, has_q) {
                (false, false) => self.amps[i] *= op.c00,
                (true, true) => self.amps[i] *= op.c11,
                (true, false) => {
                    let j = i ^ both;
                    let s = self.string_sign(i, lo, hi);
                    let a = self.amps[i];
                    let b = self.amps[j];
                    self.amps[i] = op.aa * a + op.ab * s * b;
                    self.amps[j] = op.ba * s * a + op.bb * b;
                }
                (false, true) => {} // handled together with its partner
            }
        }
        Ok(())
    }

    /// Dense gate on a contiguous block of fermionic modes
    /// [first, first+count); only valid for number-conserving lifts whose
    /// sign bookkeeping is internal to the block.
    pub fn apply_mode_block(
        &mut self,
        first: usize,
        count: usize,
        mat: &[Complex64],
    ) -> Result<()> {
        self.layout.check_mode(first + count - 1)?;
        let b = 1usize << count;
        if mat.len() != b * b {
            return Err(Error::ShapeMismatch {
                got: mat.len(),
                want: b * b,
            });
        }
        let low = 1usize << first;
        let highs = self.amps.len() >> (first + count);
        let mut tmp = vec![C_ZERO; b];
        for high in 0..highs {
            let hbase = high << (first + count);
            for lo in 0..low {
                let base = hbase | lo;
                for (t, slot) in tmp.iter_mut().enumerate() {
                    *slot = self.amps[base + (t << first)];
                }
                for t in 0..b {
                    let mut acc = C_ZERO;
                    let row = &mat[t * b..(t + 1) * b];
                    for (s, v) in tmp.iter().enumerate() {
                        acc += row[s] * v;
                    }
                    self.amps[base + (t << first)] = acc;
                }
            }
        }
        Ok(())
    }

    /// As `apply_mode_block` but with the matrix selected by a control
    /// qudit's digit.
    pub fn apply_ctrl_mode_block(
        &mut self,
        ctrl: usize,
        first: usize,
        count: usize,
        mats: &[Vec<Complex64>],
    ) -> Result<()> {
        self.layout.check_qudit(ctrl)?;
        self.layout.check_mode(first + count - 1)?;
        let q = self.layout.group().order();
        let b = 1usize << count;
        if mats.len() != q || mats.iter().any(|m| m.len() != b * b) {
            return Err(Error::ShapeMismatch {
                got: mats.len(),
                want: q,
            });
        }
        let low = 1usize << first;
        let shift = first + count;
        let highs = self.amps.len() >> shift;
        // a "high" value carries every fermionic bit above the block plus
        // all qudit digits, so the control digit is a function of it
        let rest_modes = self.layout.n_modes - shift;
        let qstride = self.layout.qpow[ctrl];
        let mut tmp = vec![C_ZERO; b];
        for high in 0..highs {
            let g = ((high >> rest_modes) / qstride) % q;
            let mat = &mats[g];
            let hbase = high << shift;
            for lo in 0..low {
                let base = hbase | lo;
                for (t, slot) in tmp.iter_mut().enumerate() {
                    *slot = self.amps[base + (t << first)];
                }
                for t in 0..b {
                    let mut acc = C_ZERO;
                    let row = &mat[t * b..(t + 1) * b];
                    for (s, v) in tmp.iter().enumerate() {
                        acc += row[s] * v;
                    }
                    self.amps[base + (t << first)] = acc;
                }
            }
        }
        Ok(())
    }

    /// Dense qudit gate applied only where a fermionic mode is occupied
    /// (identity where it is empty). The control is diagonal in fermion
    /// number, so no sign string arises.
    pub fn apply_mode_controlled_qudit_op(
        &mut self,
        mode: usize,
        qudit: usize,
        mat: &[Complex64],
    ) -> Result<()> {
        self.layout.check_mode(mode)?;
        self.layout.check_qudit(qudit)?;
        let q = self.layout.group().order();
        if mat.len() != q * q {
            return Err(Error::ShapeMismatch {
                got: mat.len(),
                want: q * q,
            });
        }
        let s = self.layout.qudit_stride(qudit);
        let span = s * q;
        let mb = 1usize << mode;
        let mut tmp = vec![C_ZERO; q];
        let mut block = 0;
        while block < self.amps.len() {
            for lo in 0..s {
                let base = block + lo;
                if base & mb == 0 {
                    continue;
                }
                for (h, t) in tmp.iter_mut().enumerate() {
                    *t = self.amps[base + h * s];
                }
                for h in 0..q {
                    let mut acc = C_ZERO;
                    for (g, t) in tmp.iter().enumerate() {
                        acc += mat[h * q + g] * t;
                    }
                    self.amps[base + h * s] = acc;
                }
            }
            block += span;
        }
        Ok(())
    }

    /// Accumulates `coeff(i) * a+_p a_q |self>` into `out`. The coefficient
    /// closure sees the source basis index (its qudit digits are unchanged
    /// by the bilinear). With p == q this is a number term.
    pub fn accumulate_bilinear<F>(
        &self,
        out: &mut StateVector,
        p: usize,
        q: usize,
        coeff: F,
    ) -> Result<()>
    where
        F: Fn(usize) -> Complex64,
    {
        self.layout.check_mode(p)?;
        self.layout.check_mode(q)?;
        if p == q {
            let pb = 1usize << p;
            for (i, a) in self.amps.iter().enumerate() {
                if i & pb != 0 {
                    out.amps[i] += coeff(i) * a;
                }
            }
            return Ok(());
        }
        let (lo, hi) = (p.min(q), p.max(q));
        let pb = 1usize << p;
        let qb = 1usize << q;
        let both = pb | qb;
        for (i, a) in self.amps.iter().enumerate() {
            if i & qb != 0 && i & pb == 0 {
                let s = self.string_sign(i, lo, hi);
                out.amps[i ^ both] += coeff(i) * s * a;
            }
        }
        Ok(())
    }

    /// a+_mode |self> as a fresh vector.
    pub fn apply_create(&self, mode: usize) -> Result<StateVector> {
        self.layout.check_mode(mode)?;
        let mut out = StateVector::zero(self.layout.clone());
        let mb = 1usize << mode;
        let below = mb - 1;
        for (i, a) in self.amps.iter().enumerate() {
            if i & mb == 0 {
                let s = if (i & below).count_ones() & 1 == 0 {
                    1.0
                } else {
                    -1.0
                };
                out.amps[i | mb] = s * a;
            }
        }
        Ok(out)
    }

    /// a_mode |self> as a fresh vector.
    pub fn apply_annihilate(&self, mode: usize) -> Result<StateVector> {
        self.layout.check_mode(mode)?;
        let mut out = StateVector::zero(self.layout.clone());
        let mb = 1usize << mode;
        let below = mb - 1;
        for (i, a) in self.amps.iter().enumerate() {
            if i & mb != 0 {
                let s = if (i & below).count_ones() & 1 == 0 {
                    1.0
                } else {
                    -1.0
                };
                out.amps[i & !mb] = s * a;
            }
        }
        Ok(out)
    }

    /// Sum of occupation expectations over the listed modes.
    pub fn number_expectation_modes(&self, modes: &[usize]) -> Result<f64> {
        let mut mask = 0usize;
        for &m in modes {
            self.layout.check_mode(m)?;
            mask |= 1 << m;
        }
        let mut total = 0.0f64;
        for chunk_start in (0..self.amps.len()).step_by(4096) {
            let mut acc = 0.0f64;
            for (off, a) in self.amps[chunk_start..(chunk_start + 4096).min(self.amps.len())]
                .iter()
                .enumerate()
            {
                let i = chunk_start + off;
                let n = (i & mask).count_ones();
                if n > 0 {
                    acc += n as f64 * a.norm_sqr();
                }
            }
            total += acc;
        }
        Ok(total)
    }

    // ---- embedding -----------------------------------------------------

    /// Lifts a state into a layout with more ancilla machinery: ancilla
    /// qudits start in |e~> and chi modes empty.
    pub fn embed(&self, target: Arc<HilbertLayout>) -> Result<StateVector> {
        let src = &self.layout;
        if src.group().name() != target.group().name() || src.geometry() != target.geometry() {
            return Err(Error::LayoutMismatch);
        }
        if target.n_modes < src.n_modes || target.n_qudits() < src.n_qudits() {
            return Err(Error::LayoutMismatch);
        }
        let mut out = StateVector::zero(target.clone());
        let fs = src.fdim;
        let ft = target.fdim;
        for qidx in 0..src.qudit_configs() {
            let from = qidx * fs;
            let to = qidx * ft;
            out.amps[to..to + fs].copy_from_slice(&self.amps[from..from + fs]);
        }
        Ok(out)
    }

    /// Squared weight inside the ancilla reference sector (all ancilla
    /// digits at the identity, all chi modes empty).
    pub fn reference_sector_weight(&self) -> f64 {
        let lay = &self.layout;
        let d = lay.comps();
        let n_phys_modes = lay.n_matter_modes();
        let chi_mask = if lay.with_chi {
            ((1usize << d) - 1) << n_phys_modes
        } else {
            0
        };
        let phys_configs = lay.qpow[lay.n_links()];
        let mut total = 0.0f64;
        for qidx in 0..phys_configs {
            // ancilla digits above the links must be zero: those configs
            // are exactly qidx < q^L with the rest of the digits zero
            let base = qidx * lay.fdim;
            for f in 0..lay.fdim {
                if f & chi_mask == 0 {
                    total += self.amps[base + f].norm_sqr();
                }
            }
        }
        total
    }

    /// Projects onto the ancilla reference sector and returns the physical
    /// state plus the squared weight lost outside the sector.
    pub fn extract_physical(&self, physical: Arc<HilbertLayout>) -> Result<(StateVector, f64)> {
        let lay = &self.layout;
        if physical.group().name() != lay.group().name()
            || physical.geometry() != lay.geometry()
            || physical.n_ancillas != 0
            || physical.with_chi
        {
            return Err(Error::LayoutMismatch);
        }
        let mut out = StateVector::zero(physical.clone());
        let fs = physical.fdim;
        for qidx in 0..physical.qudit_configs() {
            let from = qidx * lay.fdim;
            let to = qidx * fs;
            out.amps[to..to + fs].copy_from_slice(&self.amps[from..from + fs]);
        }
        let leak = (self.norm_sqr() - out.norm_sqr()).max(0.0);
        Ok((out, leak))
    }

    // ---- debug dump ------------------------------------------------------

    /// Binary dump: one descriptor line, then little-endian (re, im) f64
    /// pairs. Debugging aid only.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.layout.descriptor())?;
        for a in &self.amps {
            w.write_all(&a.re.to_le_bytes())?;
            w.write_all(&a.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: Read>(layout: Arc<HilbertLayout>, r: R) -> Result<StateVector> {
        let mut reader = BufReader::new(r);
        let mut header = String::new();
        reader.read_line(&mut header)?;
        if header.trim() != layout.descriptor() {
            return Err(Error::LayoutMismatch);
        }
        let mut s = StateVector::zero(layout);
        let mut buf = [0u8; 16];
        for a in s.amps.iter_mut() {
            reader.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
            *a = Complex64::new(re, im);
        }
        Ok(s)
    }
}
