//! Gate schedules: the ordered list of primitive protocol steps, with a
//! stable line-oriented wire format that parses back into an executable
//! schedule.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lattice::{build_lattice, Boundary, Dir, LatticeGeometry, Orientation, Vertex};
use crate::oracle::MesonOp;

/// Rotation axis of the endpoint spin formed by a matter mode and its
/// chi partner: y measures M, x measures M'.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Y,
    X,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Y => write!(f, "y"),
            Axis::X => write!(f, "x"),
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" => Ok(Axis::Y),
            "x" => Ok(Axis::X),
            other => Err(Error::BadStateSpec(format!("unknown axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    Link(usize),
    Vertex(Vertex),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Reset/validate the ancilla register: |e~> and the chi vacuum.
    Prepare,
    /// Bookkeeping only; the simulated ancilla is positionless.
    Move(Site),
    Entangle {
        link: usize,
        orient: Orientation,
        adjoint: bool,
    },
    Swap {
        vertex: Vertex,
    },
    DeGauge {
        link: usize,
        orient: Orientation,
        adjoint: bool,
    },
    Rotate {
        vertex: Vertex,
        axis: Axis,
    },
    ReadoutTrU,
    ReadoutNumberDiff {
        vertex: Vertex,
    },
    ExciteTrU,
    ExciteString {
        vertex: Vertex,
        which: MesonOp,
    },
}

impl Step {
    /// True for steps that apply an operator to the state.
    pub fn is_gate(&self) -> bool {
        matches!(
            self,
            Step::Entangle { .. }
                | Step::Swap { .. }
                | Step::DeGauge { .. }
                | Step::Rotate { .. }
                | Step::ExciteTrU
                | Step::ExciteString { .. }
        )
    }

    /// The lattice site this step interacts with, if any.
    pub fn site(&self) -> Option<Site> {
        match self {
            Step::Move(s) => Some(*s),
            Step::Entangle { link, .. } | Step::DeGauge { link, .. } => Some(Site::Link(*link)),
            Step::Swap { vertex }
            | Step::Rotate { vertex, .. }
            | Step::ReadoutNumberDiff { vertex }
            | Step::ExciteString { vertex, .. } => Some(Site::Vertex(*vertex)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GateSchedule {
    pub group_label: String,
    pub geometry: LatticeGeometry,
    /// Free-text echo of the request that produced this schedule.
    pub request: String,
    pub steps: Vec<Step>,
}

impl GateSchedule {
    pub fn gate_count(&self) -> usize {
        self.steps.iter().filter(|s| s.is_gate()).count()
    }

    fn format_link(&self, link: usize) -> String {
        let (v, dir) = self.geometry.link(link);
        format!("({},{},{})", v.x, v.y, dir.index())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("GROUP {}\n", self.group_label));
        out.push_str(&format!("LATTICE {}\n", self.geometry.descriptor()));
        out.push_str(&format!("REQUEST {}\n", self.request));
        for step in &self.steps {
            let line = match step {
                Step::Prepare => "PREPARE".to_string(),
                Step::Move(Site::Link(l)) => format!("MOVE link={}", self.format_link(*l)),
                Step::Move(Site::Vertex(v)) => format!("MOVE vertex=({},{})", v.x, v.y),
                Step::Entangle {
                    link,
                    orient,
                    adjoint,
                } => format!(
                    "ENTANGLE link={} orient={}{}",
                    self.format_link(*link),
                    orient,
                    if *adjoint { " adjoint" } else { "" }
                ),
                Step::Swap { vertex } => format!("SWAP vertex=({},{})", vertex.x, vertex.y),
                Step::DeGauge {
                    link,
                    orient,
                    adjoint,
                } => format!(
                    "DEGAUGE link={} orient={}{}",
                    self.format_link(*link),
                    orient,
                    if *adjoint { " adjoint" } else { "" }
                ),
                Step::Rotate { vertex, axis } => {
                    format!("ROTATE vertex=({},{}) axis={}", vertex.x, vertex.y, axis)
                }
                Step::ReadoutTrU => "READOUT trU".to_string(),
                Step::ReadoutNumberDiff { vertex } => {
                    format!("READOUT ndiff vertex=({},{})", vertex.x, vertex.y)
                }
                Step::ExciteTrU => "EXCITE trU".to_string(),
                Step::ExciteString { vertex, which } => format!(
                    "EXCITE string vertex=({},{}) which={}",
                    vertex.x, vertex.y, which
                ),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<GateSchedule> {
        let mut group_label = None;
        let mut geometry = None;
        let mut request = String::new();
        let mut steps = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = ln + 1;
            if line.is_empty() {
                continue;
            }
            let (word, rest) = line.split_once(' ').unwrap_or((line, ""));
            let rest = rest.trim();
            let err = |msg: String| Error::ScheduleParse {
                line: lineno,
                msg,
            };
            match word {
                "GROUP" => group_label = Some(rest.to_string()),
                "LATTICE" => geometry = Some(parse_lattice(rest, lineno)?),
                "REQUEST" => request = rest.to_string(),
                _ => {
                    let geom = geometry
                        .as_ref()
                        .ok_or_else(|| err("steps before LATTICE header".into()))?;
                    steps.push(parse_step(word, rest, geom, lineno)?);
                }
            }
        }
        Ok(GateSchedule {
            group_label: group_label
                .ok_or(Error::ScheduleParse {
                    line: 0,
                    msg: "missing GROUP header".into(),
                })?,
            geometry: geometry.ok_or(Error::ScheduleParse {
                line: 0,
                msg: "missing LATTICE header".into(),
            })?,
            request,
            steps,
        })
    }
}

fn parse_lattice(s: &str, line: usize) -> Result<LatticeGeometry> {
    let err = |msg: &str| Error::ScheduleParse {
        line,
        msg: msg.to_string(),
    };
    let mut it = s.split_whitespace();
    let dims = it.next().ok_or_else(|| err("missing lattice size"))?;
    let boundary = match it.next().ok_or_else(|| err("missing boundary"))? {
        "open" => Boundary::Open,
        "periodic" => Boundary::Periodic,
        other => {
            return Err(err(&format!("unknown boundary `{other}`")));
        }
    };
    let (lx, ly) = dims
        .split_once('x')
        .ok_or_else(|| err("lattice size must be <lx>x<ly>"))?;
    let lx = lx.parse().map_err(|_| err("bad lx"))?;
    let ly = ly.parse().map_err(|_| err("bad ly"))?;
    build_lattice(lx, ly, boundary)
}

fn field<'a>(rest: &'a str, key: &str, line: usize) -> Result<&'a str> {
    rest.split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|t| t.strip_prefix('=')))
        .ok_or(Error::ScheduleParse {
            line,
            msg: format!("missing field `{key}=`"),
        })
}

fn parse_vertex(s: &str, line: usize) -> Result<Vertex> {
    let err = || Error::ScheduleParse {
        line,
        msg: format!("bad vertex `{s}`"),
    };
    let inner = s
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(err)?;
    let mut it = inner.split(',');
    let x = it.next().ok_or_else(err)?.parse().map_err(|_| err())?;
    let y = it.next().ok_or_else(err)?.parse().map_err(|_| err())?;
    if it.next().is_some() {
        return Err(err());
    }
    Ok(Vertex::new(x, y))
}

fn parse_link(s: &str, geom: &LatticeGeometry, line: usize) -> Result<usize> {
    let err = |msg: String| Error::ScheduleParse { line, msg };
    let inner = s
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| err(format!("bad link `{s}`")))?;
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != 3 {
        return Err(err(format!("bad link `{s}`")));
    }
    let x = parts[0].parse().map_err(|_| err("bad link x".into()))?;
    let y = parts[1].parse().map_err(|_| err("bad link y".into()))?;
    let d: u8 = parts[2].parse().map_err(|_| err("bad link dir".into()))?;
    let dir = Dir::from_index(d).ok_or_else(|| err("link dir must be 1 or 2".into()))?;
    geom.link_id(Vertex::new(x, y), dir)
        .map_err(|e| err(e.to_string()))
}

fn parse_orient(rest: &str, line: usize) -> Result<Orientation> {
    match field(rest, "orient", line)? {
        "+1" | "1" => Ok(Orientation::Forward),
        "-1" => Ok(Orientation::Reverse),
        other => Err(Error::ScheduleParse {
            line,
            msg: format!("bad orientation `{other}`"),
        }),
    }
}

fn parse_step(word: &str, rest: &str, geom: &LatticeGeometry, line: usize) -> Result<Step> {
    let adjoint = rest.split_whitespace().any(|t| t == "adjoint");
    match word {
        "PREPARE" => Ok(Step::Prepare),
        "MOVE" => {
            if let Ok(l) = field(rest, "link", line) {
                Ok(Step::Move(Site::Link(parse_link(l, geom, line)?)))
            } else {
                let v = field(rest, "vertex", line)?;
                Ok(Step::Move(Site::Vertex(parse_vertex(v, line)?)))
            }
        }
        "ENTANGLE" => Ok(Step::Entangle {
            link: parse_link(field(rest, "link", line)?, geom, line)?,
            orient: parse_orient(rest, line)?,
            adjoint,
        }),
        "SWAP" => Ok(Step::Swap {
            vertex: parse_vertex(field(rest, "vertex", line)?, line)?,
        }),
        "DEGAUGE" => Ok(Step::DeGauge {
            link: parse_link(field(rest, "link", line)?, geom, line)?,
            orient: parse_orient(rest, line)?,
            adjoint,
        }),
        "ROTATE" => Ok(Step::Rotate {
            vertex: parse_vertex(field(rest, "vertex", line)?, line)?,
            axis: field(rest, "axis", line)?.parse()?,
        }),
        "READOUT" => {
            let mut it = rest.split_whitespace();
            match it.next() {
                Some("trU") => Ok(Step::ReadoutTrU),
                Some("ndiff") => Ok(Step::ReadoutNumberDiff {
                    vertex: parse_vertex(field(rest, "vertex", line)?, line)?,
                }),
                other => Err(Error::ScheduleParse {
                    line,
                    msg: format!("unknown readout `{other:?}`"),
                }),
            }
        }
        "EXCITE" => {
            let mut it = rest.split_whitespace();
            match it.next() {
                Some("trU") => Ok(Step::ExciteTrU),
                Some("string") => Ok(Step::ExciteString {
                    vertex: parse_vertex(field(rest, "vertex", line)?, line)?,
                    which: field(rest, "which", line)?.parse()?,
                }),
                other => Err(Error::ScheduleParse {
                    line,
                    msg: format!("unknown excitation `{other:?}`"),
                }),
            }
        }
        other => Err(Error::ScheduleParse {
            line,
            msg: format!("unknown step `{other}`"),
        }),
    }
}

/// Structural two-body locality check: every gate touches at most one
/// link or one vertex (plus the ancilla), every gate is preceded by a
/// move to its site, and consecutive moves form a contiguous walk.
pub fn check_locality(schedule: &GateSchedule) -> Result<()> {
    let geom = &schedule.geometry;
    let adjacent = |a: Site, b: Site| -> bool {
        let verts = |s: Site| -> Vec<Vertex> {
            match s {
                Site::Vertex(v) => vec![v],
                Site::Link(l) => {
                    let (a, b) = geom.link_endpoints(l);
                    vec![a, b]
                }
            }
        };
        let va = verts(a);
        verts(b).iter().any(|v| va.contains(v))
    };
    let mut last_move: Option<Site> = None;
    for (k, step) in schedule.steps.iter().enumerate() {
        match step {
            Step::Move(site) => {
                if let Some(prev) = last_move {
                    if !adjacent(prev, *site) {
                        return Err(Error::ScheduleParse {
                            line: k,
                            msg: "ancilla walk is not contiguous".into(),
                        });
                    }
                }
                last_move = Some(*site);
            }
            s if s.is_gate() => {
                if let Some(site) = s.site() {
                    if last_move != Some(site) {
                        return Err(Error::ScheduleParse {
                            line: k,
                            msg: "gate is not preceded by a move to its site".into(),
                        });
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}
