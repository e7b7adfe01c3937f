//! 2D lattice geometry: directed links, paths and closed loops.
//!
//! Vertices live at (x, y) with 0 <= x < lx, 0 <= y < ly; a link is a
//! (vertex, direction) pair pointing towards +x (direction 1) or +y
//! (direction 2). Paths carry an orientation per step: +1 traverses a
//! link along its positive direction, -1 against it.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Vertex {
    pub x: usize,
    pub y: usize,
}

impl Vertex {
    pub fn new(x: usize, y: usize) -> Self {
        Vertex { x, y }
    }

    /// Sublattice parity: 0 on the even sublattice, 1 on the odd one.
    pub fn parity(&self) -> u8 {
        ((self.x + self.y) % 2) as u8
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dir {
    X,
    Y,
}

impl Dir {
    pub const BOTH: [Dir; 2] = [Dir::X, Dir::Y];

    /// 1-based direction index used in wire formats.
    pub fn index(&self) -> u8 {
        match self {
            Dir::X => 1,
            Dir::Y => 2,
        }
    }

    pub fn from_index(i: u8) -> Option<Dir> {
        match i {
            1 => Some(Dir::X),
            2 => Some(Dir::Y),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Open,
    Periodic,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Open => write!(f, "open"),
            Boundary::Periodic => write!(f, "periodic"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Forward,
    Reverse,
}

impl Orientation {
    pub fn sign(&self) -> i8 {
        match self {
            Orientation::Forward => 1,
            Orientation::Reverse => -1,
        }
    }

    pub fn flipped(&self) -> Orientation {
        match self {
            Orientation::Forward => Orientation::Reverse,
            Orientation::Reverse => Orientation::Forward,
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Orientation::Forward => write!(f, "+1"),
            Orientation::Reverse => write!(f, "-1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeGeometry {
    lx: usize,
    ly: usize,
    boundary: Boundary,
    links: Vec<(Vertex, Dir)>,
    /// Per vertex index: link ids in directions [X, Y], if present.
    lookup: Vec<[Option<usize>; 2]>,
}

pub fn build_lattice(lx: usize, ly: usize, boundary: Boundary) -> Result<LatticeGeometry> {
    if lx == 0 || ly == 0 {
        return Err(Error::EmptyLattice { lx, ly });
    }
    let nv = lx * ly;
    let mut links = Vec::new();
    let mut lookup = vec![[None, None]; nv];
    for y in 0..ly {
        for x in 0..lx {
            let v = Vertex::new(x, y);
            for (slot, dir) in Dir::BOTH.iter().enumerate() {
                let exists = match boundary {
                    Boundary::Periodic => true,
                    Boundary::Open => match dir {
                        Dir::X => x + 1 < lx,
                        Dir::Y => y + 1 < ly,
                    },
                };
                if exists {
                    lookup[y * lx + x][slot] = Some(links.len());
                    links.push((v, *dir));
                }
            }
        }
    }
    Ok(LatticeGeometry {
        lx,
        ly,
        boundary,
        links,
        lookup,
    })
}

impl LatticeGeometry {
    pub fn lx(&self) -> usize {
        self.lx
    }

    pub fn ly(&self) -> usize {
        self.ly
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn vertex_count(&self) -> usize {
        self.lx * self.ly
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn vertex_index(&self, v: Vertex) -> usize {
        v.y * self.lx + v.x
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.vertex_count()).map(move |i| Vertex::new(i % self.lx, i / self.lx))
    }

    pub fn contains(&self, v: Vertex) -> bool {
        v.x < self.lx && v.y < self.ly
    }

    pub fn link(&self, id: usize) -> (Vertex, Dir) {
        self.links[id]
    }

    pub fn link_id(&self, v: Vertex, dir: Dir) -> Result<usize> {
        if !self.contains(v) {
            return Err(Error::VertexOutOfBounds {
                x: v.x as i64,
                y: v.y as i64,
            });
        }
        self.lookup[self.vertex_index(v)][match dir {
            Dir::X => 0,
            Dir::Y => 1,
        }]
        .ok_or(Error::NoSuchLink {
            x: v.x,
            y: v.y,
            dir: dir.index(),
        })
    }

    /// Neighbor of `v` one step along `dir` (or against it), honoring the
    /// boundary. Returns None when the step leaves an open lattice.
    pub fn neighbor(&self, v: Vertex, dir: Dir, forward: bool) -> Option<Vertex> {
        let (dx, dy) = match dir {
            Dir::X => (1i64, 0i64),
            Dir::Y => (0, 1),
        };
        let (dx, dy) = if forward { (dx, dy) } else { (-dx, -dy) };
        let nx = v.x as i64 + dx;
        let ny = v.y as i64 + dy;
        match self.boundary {
            Boundary::Periodic => Some(Vertex::new(
                nx.rem_euclid(self.lx as i64) as usize,
                ny.rem_euclid(self.ly as i64) as usize,
            )),
            Boundary::Open => {
                if nx < 0 || ny < 0 || nx >= self.lx as i64 || ny >= self.ly as i64 {
                    None
                } else {
                    Some(Vertex::new(nx as usize, ny as usize))
                }
            }
        }
    }

    /// Both endpoints of a link in its positive direction: (from, to).
    pub fn link_endpoints(&self, id: usize) -> (Vertex, Vertex) {
        let (v, dir) = self.links[id];
        let to = self
            .neighbor(v, dir, true)
            .expect("stored links always have a head vertex");
        (v, to)
    }

    pub fn descriptor(&self) -> String {
        format!("{}x{} {}", self.lx, self.ly, self.boundary)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    pub link: usize,
    pub orient: Orientation,
}

impl PathStep {
    /// (source, target) of this step given the traversal orientation.
    pub fn endpoints(&self, geom: &LatticeGeometry) -> (Vertex, Vertex) {
        let (a, b) = geom.link_endpoints(self.link);
        match self.orient {
            Orientation::Forward => (a, b),
            Orientation::Reverse => (b, a),
        }
    }
}

/// A contiguous directed path on the lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSpec {
    start: Vertex,
    steps: Vec<PathStep>,
    end: Vertex,
}

impl PathSpec {
    /// Validates contiguity and builds the path.
    pub fn from_steps(geom: &LatticeGeometry, steps: Vec<PathStep>) -> Result<PathSpec> {
        if steps.is_empty() {
            return Err(Error::EmptyPath);
        }
        let (start, mut cursor) = steps[0].endpoints(geom);
        for (k, step) in steps.iter().enumerate().skip(1) {
            let (from, to) = step.endpoints(geom);
            if from != cursor {
                return Err(Error::PathNotContiguous { step: k });
            }
            cursor = to;
        }
        Ok(PathSpec {
            start,
            steps,
            end: cursor,
        })
    }

    pub fn start(&self) -> Vertex {
        self.start
    }

    pub fn end(&self) -> Vertex {
        self.end
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[PathStep] {
        &self.steps
    }

    /// All visited vertices, start first.
    pub fn vertices(&self, geom: &LatticeGeometry) -> Vec<Vertex> {
        let mut out = vec![self.start];
        for s in &self.steps {
            out.push(s.endpoints(geom).1);
        }
        out
    }

    /// Checks the path for meson use: distinct endpoints, no revisited vertex.
    pub fn check_string(&self, geom: &LatticeGeometry) -> Result<()> {
        if self.start == self.end {
            return Err(Error::EndpointsCoincide);
        }
        let vs = self.vertices(geom);
        for (i, v) in vs.iter().enumerate() {
            if vs[..i].contains(v) {
                return Err(Error::PathNotSimple { x: v.x, y: v.y });
            }
        }
        Ok(())
    }
}

/// A closed path. Loops may revisit links; the operator stays well-defined
/// as an ordered product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopSpec {
    path: PathSpec,
}

impl LoopSpec {
    pub fn from_path(geom: &LatticeGeometry, path: PathSpec) -> Result<LoopSpec> {
        if path.start != path.end {
            return Err(Error::LoopNotClosed {
                sx: path.start.x,
                sy: path.start.y,
                ex: path.end.x,
                ey: path.end.y,
            });
        }
        if geom.boundary() == Boundary::Open && path.len() < 4 {
            return Err(Error::LoopTooShort(path.len()));
        }
        Ok(LoopSpec { path })
    }

    pub fn path(&self) -> &PathSpec {
        &self.path
    }

    pub fn steps(&self) -> &[PathStep] {
        self.path.steps()
    }

    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    /// Same loop traversed from a different base point.
    pub fn rotated(&self, geom: &LatticeGeometry, by: usize) -> LoopSpec {
        let n = self.len();
        let steps: Vec<PathStep> = (0..n)
            .map(|k| self.path.steps[(k + by) % n])
            .collect();
        let path = PathSpec::from_steps(geom, steps).expect("rotation preserves contiguity");
        LoopSpec { path }
    }
}

/// Counterclockwise rectangle: bottom and right edges traversed forward,
/// top and left edges reversed.
pub fn rectangle_loop(
    geom: &LatticeGeometry,
    corner: Vertex,
    w: usize,
    h: usize,
) -> Result<LoopSpec> {
    if w == 0 || h == 0 {
        return Err(Error::DegenerateRectangle { w, h });
    }
    let fits = match geom.boundary() {
        Boundary::Open => {
            corner.x + w < geom.lx() && corner.y + h < geom.ly()
        }
        Boundary::Periodic => w <= geom.lx() && h <= geom.ly() && geom.contains(corner),
    };
    if !fits {
        return Err(Error::RectangleOutOfBounds {
            x: corner.x,
            y: corner.y,
            w,
            h,
        });
    }
    let mut steps = Vec::with_capacity(2 * (w + h));
    let mut cur = corner;
    for _ in 0..w {
        steps.push(PathStep {
            link: geom.link_id(cur, Dir::X)?,
            orient: Orientation::Forward,
        });
        cur = geom.neighbor(cur, Dir::X, true).unwrap();
    }
    for _ in 0..h {
        steps.push(PathStep {
            link: geom.link_id(cur, Dir::Y)?,
            orient: Orientation::Forward,
        });
        cur = geom.neighbor(cur, Dir::Y, true).unwrap();
    }
    for _ in 0..w {
        cur = geom.neighbor(cur, Dir::X, false).unwrap();
        steps.push(PathStep {
            link: geom.link_id(cur, Dir::X)?,
            orient: Orientation::Reverse,
        });
    }
    for _ in 0..h {
        cur = geom.neighbor(cur, Dir::Y, false).unwrap();
        steps.push(PathStep {
            link: geom.link_id(cur, Dir::Y)?,
            orient: Orientation::Reverse,
        });
    }
    LoopSpec::from_path(geom, PathSpec::from_steps(geom, steps)?)
}

/// Monotone staircase between two vertices; direction-1 moves are
/// exhausted before direction-2 moves (the deterministic tie-break).
pub fn shortest_path(geom: &LatticeGeometry, from: Vertex, to: Vertex) -> Result<PathSpec> {
    if from == to {
        return Err(Error::EndpointsCoincide);
    }
    for v in [from, to] {
        if !geom.contains(v) {
            return Err(Error::VertexOutOfBounds {
                x: v.x as i64,
                y: v.y as i64,
            });
        }
    }
    let mut steps = Vec::new();
    let mut cur = from;
    for (dir, target) in [(Dir::X, to.x), (Dir::Y, to.y)] {
        let coord = |v: Vertex| match dir {
            Dir::X => v.x,
            Dir::Y => v.y,
        };
        while coord(cur) != target {
            let forward = coord(cur) < target;
            let next = geom.neighbor(cur, dir, forward).ok_or(Error::NoSuchLink {
                x: cur.x,
                y: cur.y,
                dir: dir.index(),
            })?;
            let (base, orient) = if forward {
                (cur, Orientation::Forward)
            } else {
                (next, Orientation::Reverse)
            };
            steps.push(PathStep {
                link: geom.link_id(base, dir)?,
                orient,
            });
            cur = next;
        }
    }
    PathSpec::from_steps(geom, steps)
}

/// Every elementary 1x1 plaquette of the lattice.
pub fn plaquettes(geom: &LatticeGeometry) -> Vec<LoopSpec> {
    let (mx, my) = match geom.boundary() {
        Boundary::Open => (geom.lx().saturating_sub(1), geom.ly().saturating_sub(1)),
        Boundary::Periodic => (geom.lx(), geom.ly()),
    };
    let mut out = Vec::new();
    for y in 0..my {
        for x in 0..mx {
            out.push(
                rectangle_loop(geom, Vertex::new(x, y), 1, 1)
                    .expect("plaquette bounds already checked"),
            );
        }
    }
    out
}

fn parse_tuple(s: &str, arity: usize, ctx: &str) -> Result<Vec<i64>> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| Error::BadPathSyntax(ctx.to_string(), format!("expected (..) in `{s}`")))?;
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != arity {
        return Err(Error::BadPathSyntax(
            ctx.to_string(),
            format!("expected {arity} comma-separated fields in `{s}`"),
        ));
    }
    parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<i64>()
                .map_err(|_| Error::BadPathSyntax(ctx.to_string(), format!("bad integer `{p}`")))
        })
        .collect()
}

fn parse_steps(geom: &LatticeGeometry, body: &str, ctx: &str) -> Result<Vec<PathStep>> {
    let mut steps = Vec::new();
    for item in body.split(';').filter(|s| !s.trim().is_empty()) {
        let f = parse_tuple(item, 4, ctx)?;
        let dir = Dir::from_index(f[2] as u8).ok_or_else(|| {
            Error::BadPathSyntax(ctx.to_string(), format!("direction must be 1 or 2 in `{item}`"))
        })?;
        let orient = match f[3] {
            1 => Orientation::Forward,
            -1 => Orientation::Reverse,
            _ => {
                return Err(Error::BadPathSyntax(
                    ctx.to_string(),
                    format!("orientation must be +1 or -1 in `{item}`"),
                ))
            }
        };
        if f[0] < 0 || f[1] < 0 {
            return Err(Error::VertexOutOfBounds { x: f[0], y: f[1] });
        }
        let link = geom.link_id(Vertex::new(f[0] as usize, f[1] as usize), dir)?;
        steps.push(PathStep { link, orient });
    }
    PathSpec::from_steps(geom, steps.clone())?;
    Ok(steps)
}

/// Loop syntax: `rect:(x,y,w,h)` or `steps:(x,y,dir,+-1);...`.
pub fn parse_loop(geom: &LatticeGeometry, s: &str) -> Result<LoopSpec> {
    let s = s.trim();
    if let Some(body) = s.strip_prefix("rect:") {
        let f = parse_tuple(body, 4, s)?;
        if f.iter().any(|&v| v < 0) {
            return Err(Error::BadPathSyntax(
                s.to_string(),
                "rect fields must be non-negative".into(),
            ));
        }
        rectangle_loop(
            geom,
            Vertex::new(f[0] as usize, f[1] as usize),
            f[2] as usize,
            f[3] as usize,
        )
    } else if let Some(body) = s.strip_prefix("steps:") {
        let steps = parse_steps(geom, body, s)?;
        LoopSpec::from_path(geom, PathSpec::from_steps(geom, steps)?)
    } else {
        Err(Error::BadPathSyntax(
            s.to_string(),
            "expected `rect:` or `steps:` prefix".into(),
        ))
    }
}

/// Path syntax: `auto:(x1,y1)->(x2,y2)` or `steps:(x,y,dir,+-1);...`.
pub fn parse_path(geom: &LatticeGeometry, s: &str) -> Result<PathSpec> {
    let s = s.trim();
    if let Some(body) = s.strip_prefix("auto:") {
        let (a, b) = body.split_once("->").ok_or_else(|| {
            Error::BadPathSyntax(s.to_string(), "expected `(x1,y1)->(x2,y2)`".into())
        })?;
        let fa = parse_tuple(a, 2, s)?;
        let fb = parse_tuple(b, 2, s)?;
        if fa.iter().chain(fb.iter()).any(|&v| v < 0) {
            return Err(Error::BadPathSyntax(
                s.to_string(),
                "vertex coordinates must be non-negative".into(),
            ));
        }
        shortest_path(
            geom,
            Vertex::new(fa[0] as usize, fa[1] as usize),
            Vertex::new(fb[0] as usize, fb[1] as usize),
        )
    } else if let Some(body) = s.strip_prefix("steps:") {
        let steps = parse_steps(geom, body, s)?;
        PathSpec::from_steps(geom, steps)
    } else {
        Err(Error::BadPathSyntax(
            s.to_string(),
            "expected `auto:` or `steps:` prefix".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_counts_match_formulas() {
        assert_eq!(build_lattice(2, 2, Boundary::Open).unwrap().link_count(), 4);
        assert_eq!(build_lattice(3, 3, Boundary::Open).unwrap().link_count(), 12);
        assert_eq!(
            build_lattice(2, 2, Boundary::Periodic).unwrap().link_count(),
            8
        );
        assert!(build_lattice(0, 3, Boundary::Open).is_err());
    }

    #[test]
    fn plaquette_orientation_convention() {
        let geom = build_lattice(2, 2, Boundary::Open).unwrap();
        let lp = rectangle_loop(&geom, Vertex::new(0, 0), 1, 1).unwrap();
        let signs: Vec<i8> = lp.steps().iter().map(|s| s.orient.sign()).collect();
        assert_eq!(signs, vec![1, 1, -1, -1]);
        assert_eq!(lp.len(), 4);
    }

    #[test]
    fn wide_rectangle_closes() {
        let geom = build_lattice(3, 2, Boundary::Open).unwrap();
        let lp = rectangle_loop(&geom, Vertex::new(0, 0), 2, 1).unwrap();
        assert_eq!(lp.len(), 6);
        assert_eq!(lp.path().start(), lp.path().end());
    }

    #[test]
    fn degenerate_rectangle_rejected() {
        let geom = build_lattice(3, 3, Boundary::Open).unwrap();
        assert!(matches!(
            rectangle_loop(&geom, Vertex::new(0, 0), 0, 1),
            Err(Error::DegenerateRectangle { .. })
        ));
        assert!(rectangle_loop(&geom, Vertex::new(2, 0), 1, 1).is_err());
    }

    #[test]
    fn shortest_path_cases() {
        let geom = build_lattice(3, 3, Boundary::Open).unwrap();
        let p = shortest_path(&geom, Vertex::new(0, 0), Vertex::new(2, 0)).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.steps().iter().all(|s| s.orient == Orientation::Forward));

        // tie-break: x moves first
        let p = shortest_path(&geom, Vertex::new(0, 0), Vertex::new(1, 1)).unwrap();
        let dirs: Vec<Dir> = p.steps().iter().map(|s| geom.link(s.link).1).collect();
        assert_eq!(dirs, vec![Dir::X, Dir::Y]);

        let p = shortest_path(&geom, Vertex::new(1, 0), Vertex::new(0, 0)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.steps()[0].orient, Orientation::Reverse);

        assert!(shortest_path(&geom, Vertex::new(1, 1), Vertex::new(1, 1)).is_err());
    }

    #[test]
    fn manhattan_length() {
        let geom = build_lattice(4, 3, Boundary::Open).unwrap();
        for a in geom.vertices() {
            for b in geom.vertices() {
                if a == b {
                    continue;
                }
                let p = shortest_path(&geom, a, b).unwrap();
                let d = (a.x as i64 - b.x as i64).unsigned_abs()
                    + (a.y as i64 - b.y as i64).unsigned_abs();
                assert_eq!(p.len() as u64, d);
                assert_eq!(p.start(), a);
                assert_eq!(p.end(), b);
                p.check_string(&geom).unwrap();
            }
        }
    }

    #[test]
    fn loop_rotation_is_contiguous() {
        let geom = build_lattice(3, 3, Boundary::Open).unwrap();
        let lp = rectangle_loop(&geom, Vertex::new(0, 0), 2, 2).unwrap();
        for k in 0..lp.len() {
            let r = lp.rotated(&geom, k);
            assert_eq!(r.len(), lp.len());
        }
    }

    #[test]
    fn parse_syntax() {
        let geom = build_lattice(3, 3, Boundary::Open).unwrap();
        let lp = parse_loop(&geom, "rect:(0,0,1,1)").unwrap();
        assert_eq!(lp.len(), 4);
        let p = parse_path(&geom, "auto:(0,0)->(2,1)").unwrap();
        assert_eq!(p.len(), 3);
        let p2 = parse_path(&geom, "steps:(0,0,1,+1);(1,0,2,+1)").unwrap();
        assert_eq!(p2.len(), 2);
        assert!(parse_path(&geom, "auto:(0,0)").is_err());
        assert!(parse_loop(&geom, "steps:(0,0,1,+1)").is_err()); // open, not a loop
    }

    #[test]
    fn strings_must_be_simple_with_distinct_endpoints() {
        let geom = build_lattice(2, 2, Boundary::Open).unwrap();
        let lp = rectangle_loop(&geom, Vertex::new(0, 0), 1, 1).unwrap();
        assert!(matches!(
            lp.path().check_string(&geom),
            Err(Error::EndpointsCoincide)
        ));
        // a path that revisits a vertex without closing
        let geom = build_lattice(3, 2, Boundary::Open).unwrap();
        let mk = |v, d, o| PathStep {
            link: geom.link_id(v, d).unwrap(),
            orient: o,
        };
        let steps = vec![
            mk(Vertex::new(0, 0), Dir::X, Orientation::Forward),
            mk(Vertex::new(1, 0), Dir::Y, Orientation::Forward),
            mk(Vertex::new(1, 0), Dir::Y, Orientation::Reverse),
            mk(Vertex::new(1, 0), Dir::X, Orientation::Forward),
        ];
        let p = PathSpec::from_steps(&geom, steps).unwrap();
        assert!(matches!(
            p.check_string(&geom),
            Err(Error::PathNotSimple { x: 1, y: 0 })
        ));
    }

    #[test]
    fn periodic_wraparound_loop() {
        let geom = build_lattice(2, 2, Boundary::Periodic).unwrap();
        // straight loop around the periodic x direction
        let s0 = PathStep {
            link: geom.link_id(Vertex::new(0, 0), Dir::X).unwrap(),
            orient: Orientation::Forward,
        };
        let s1 = PathStep {
            link: geom.link_id(Vertex::new(1, 0), Dir::X).unwrap(),
            orient: Orientation::Forward,
        };
        let path = PathSpec::from_steps(&geom, vec![s0, s1]).unwrap();
        let lp = LoopSpec::from_path(&geom, path).unwrap();
        assert_eq!(lp.len(), 2);
    }
}
