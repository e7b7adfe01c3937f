//! Scenario configuration: a flat key = value file with one `[request
//! <id>]` section per protocol request. Parse errors carry line numbers.

use anyhow::{anyhow, bail, Result};
use gaugeloop::group::GroupSpec;
use gaugeloop::lattice::Boundary;

#[derive(Debug, Clone, PartialEq)]
pub enum StateSpec {
    StaggeredVacuum,
    Random(u64),
    RandomGaugeInvariant(u64),
    Product,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkStateSpec {
    Element(usize),
    Singlet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestConfig {
    pub id: String,
    pub kind: String,
    pub loop_spec: Option<String>,
    pub path_spec: Option<String>,
    pub which: String,
    pub mode: String,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub group: GroupSpec,
    pub lx: usize,
    pub ly: usize,
    pub boundary: Boundary,
    pub state: StateSpec,
    pub crosscheck: bool,
    pub tolerance: f64,
    pub lambda_gm_default: f64,
    pub lambda_gm_overrides: Vec<((usize, usize, u8), f64)>,
    pub lambda_b: f64,
    pub link_default: LinkStateSpec,
    pub link_overrides: Vec<((usize, usize, u8), LinkStateSpec)>,
    pub vertex_default: Option<u32>,
    pub vertex_overrides: Vec<((usize, usize), u32)>,
    pub requests: Vec<RequestConfig>,
    pub raw: String,
}

fn parse_link_key(s: &str, line: usize) -> Result<(usize, usize, u8)> {
    let inner = s
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| anyhow!("line {line}: expected (x,y,dir), got `{s}`"))?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!("line {line}: expected (x,y,dir), got `{s}`");
    }
    Ok((
        parts[0].parse().map_err(|_| anyhow!("line {line}: bad x in `{s}`"))?,
        parts[1].parse().map_err(|_| anyhow!("line {line}: bad y in `{s}`"))?,
        parts[2].parse().map_err(|_| anyhow!("line {line}: bad dir in `{s}`"))?,
    ))
}

fn parse_vertex_key(s: &str, line: usize) -> Result<(usize, usize)> {
    let inner = s
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| anyhow!("line {line}: expected (x,y), got `{s}`"))?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("line {line}: expected (x,y), got `{s}`");
    }
    Ok((
        parts[0].parse().map_err(|_| anyhow!("line {line}: bad x in `{s}`"))?,
        parts[1].parse().map_err(|_| anyhow!("line {line}: bad y in `{s}`"))?,
    ))
}

fn parse_link_state(s: &str, line: usize) -> Result<LinkStateSpec> {
    match s {
        "singlet" => Ok(LinkStateSpec::Singlet),
        "e" => Ok(LinkStateSpec::Element(0)),
        other => {
            if let Some(k) = other.strip_prefix('g') {
                Ok(LinkStateSpec::Element(k.parse().map_err(|_| {
                    anyhow!("line {line}: bad element `{other}` (use e, g<k> or singlet)")
                })?))
            } else {
                bail!("line {line}: bad link state `{other}` (use e, g<k> or singlet)")
            }
        }
    }
}

fn parse_occupation(s: &str, line: usize) -> Result<u32> {
    match s {
        "empty" => Ok(0),
        "full" => Ok(u32::MAX), // clamped to the component count later
        other => other
            .parse()
            .map_err(|_| anyhow!("line {line}: bad occupation `{other}` (use empty, full or a bitmask)")),
    }
}

pub fn parse(text: &str) -> Result<ScenarioConfig> {
    let mut group = None;
    let mut lattice = None;
    let mut boundary = Boundary::Open;
    let mut state = None;
    let mut crosscheck = false;
    let mut tolerance = 1e-10;
    let mut lambda_gm_default = 0.0;
    let mut lambda_gm_overrides = Vec::new();
    let mut lambda_b = 0.0;
    let mut link_default = LinkStateSpec::Singlet;
    let mut link_overrides = Vec::new();
    let mut vertex_default = None;
    let mut vertex_overrides = Vec::new();
    let mut requests: Vec<RequestConfig> = Vec::new();
    let mut current: Option<RequestConfig> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.split('#').next().unwrap_or("").trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(section) = trimmed.strip_prefix('[') {
            let section = section
                .strip_suffix(']')
                .ok_or_else(|| anyhow!("line {line}: unterminated section header"))?
                .trim();
            let id = section
                .strip_prefix("request")
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| anyhow!("line {line}: expected `[request <id>]`"))?;
            if let Some(req) = current.take() {
                requests.push(req);
            }
            if requests.iter().any(|r| r.id == id) {
                bail!("line {line}: duplicate request id `{id}`");
            }
            current = Some(RequestConfig {
                id: id.to_string(),
                kind: String::new(),
                loop_spec: None,
                path_spec: None,
                which: "M".to_string(),
                mode: "measure".to_string(),
                line,
            });
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| anyhow!("line {line}: expected `key = value`, got `{trimmed}`"))?;
        let key = key.trim();
        let value = value.trim();
        if let Some(req) = current.as_mut() {
            match key {
                "kind" => req.kind = value.to_string(),
                "loop" => req.loop_spec = Some(value.to_string()),
                "path" => req.path_spec = Some(value.to_string()),
                "which" => req.which = value.to_string(),
                "mode" => req.mode = value.to_string(),
                other => bail!("line {line}: unknown request key `{other}`"),
            }
            continue;
        }
        match key {
            "group" => {
                group = Some(
                    value
                        .parse::<GroupSpec>()
                        .map_err(|e| anyhow!("line {line}: {e}"))?,
                )
            }
            "lattice" => {
                let (lx, ly) = value
                    .split_once('x')
                    .ok_or_else(|| anyhow!("line {line}: lattice must be <lx>x<ly>"))?;
                lattice = Some((
                    lx.trim()
                        .parse()
                        .map_err(|_| anyhow!("line {line}: bad lx `{lx}`"))?,
                    ly.trim()
                        .parse()
                        .map_err(|_| anyhow!("line {line}: bad ly `{ly}`"))?,
                ));
            }
            "boundary" => {
                boundary = match value {
                    "open" => Boundary::Open,
                    "periodic" => Boundary::Periodic,
                    other => bail!("line {line}: unknown boundary `{other}`"),
                }
            }
            "state" => {
                state = Some(match value {
                    "staggered_vacuum" => StateSpec::StaggeredVacuum,
                    "product" => StateSpec::Product,
                    other => {
                        if let Some(seed) = other.strip_prefix("random:") {
                            StateSpec::Random(
                                seed.parse()
                                    .map_err(|_| anyhow!("line {line}: bad seed `{seed}`"))?,
                            )
                        } else if let Some(seed) = other.strip_prefix("random_gauge_invariant:") {
                            StateSpec::RandomGaugeInvariant(
                                seed.parse()
                                    .map_err(|_| anyhow!("line {line}: bad seed `{seed}`"))?,
                            )
                        } else {
                            bail!("line {line}: unknown state spec `{other}`");
                        }
                    }
                })
            }
            "crosscheck" => {
                crosscheck = value
                    .parse()
                    .map_err(|_| anyhow!("line {line}: crosscheck must be true or false"))?
            }
            "tolerance" => {
                tolerance = value
                    .parse()
                    .map_err(|_| anyhow!("line {line}: bad tolerance `{value}`"))?
            }
            "lambda_gm" => {
                lambda_gm_default = value
                    .parse()
                    .map_err(|_| anyhow!("line {line}: bad lambda_gm `{value}`"))?
            }
            "lambda_b" => {
                lambda_b = value
                    .parse()
                    .map_err(|_| anyhow!("line {line}: bad lambda_b `{value}`"))?
            }
            "link.default" => link_default = parse_link_state(value, line)?,
            "vertex.default" => vertex_default = Some(parse_occupation(value, line)?),
            other => {
                if let Some(k) = other.strip_prefix("lambda_gm.") {
                    lambda_gm_overrides.push((
                        parse_link_key(k, line)?,
                        value
                            .parse()
                            .map_err(|_| anyhow!("line {line}: bad coupling `{value}`"))?,
                    ));
                } else if let Some(k) = other.strip_prefix("link.") {
                    link_overrides.push((parse_link_key(k, line)?, parse_link_state(value, line)?));
                } else if let Some(k) = other.strip_prefix("vertex.") {
                    vertex_overrides
                        .push((parse_vertex_key(k, line)?, parse_occupation(value, line)?));
                } else {
                    bail!("line {line}: unknown key `{other}`");
                }
            }
        }
    }
    if let Some(req) = current.take() {
        requests.push(req);
    }
    for req in &requests {
        if req.kind.is_empty() {
            bail!("line {}: request `{}` has no kind", req.line, req.id);
        }
    }
    let (lx, ly) = lattice.ok_or_else(|| anyhow!("missing `lattice = <lx>x<ly>`"))?;
    Ok(ScenarioConfig {
        group: group.ok_or_else(|| anyhow!("missing `group = ...`"))?,
        lx,
        ly,
        boundary,
        state: state.unwrap_or(StateSpec::StaggeredVacuum),
        crosscheck,
        tolerance,
        lambda_gm_default,
        lambda_gm_overrides,
        lambda_b,
        link_default,
        link_overrides,
        vertex_default,
        vertex_overrides,
        requests,
        raw: text.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_scenario() {
        let text = "\
# demo
group = Z2
lattice = 3x3
state = random:7
crosscheck = true
lambda_b = 1.0

[request w1]
kind = wilson
loop = rect:(0,0,1,1)

[request m1]
kind = meson
path = auto:(0,0)->(2,0)
which = Mprime
mode = measure
";
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.group, GroupSpec::Z2);
        assert_eq!((cfg.lx, cfg.ly), (3, 3));
        assert_eq!(cfg.state, StateSpec::Random(7));
        assert!(cfg.crosscheck);
        assert_eq!(cfg.requests.len(), 2);
        assert_eq!(cfg.requests[1].which, "Mprime");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "group = Z2\nlattice = 3x3\nstate = bogus\n";
        let err = parse(text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn product_state_overrides() {
        let text = "\
group = Z3
lattice = 2x2
state = product
link.default = e
link.(0,0,1) = g2
vertex.default = empty
vertex.(1,1) = 1
";
        let cfg = parse(text).unwrap();
        assert_eq!(cfg.link_default, LinkStateSpec::Element(0));
        assert_eq!(cfg.link_overrides, vec![((0, 0, 1), LinkStateSpec::Element(2))]);
        assert_eq!(cfg.vertex_overrides, vec![((1, 1), 1)]);
    }
}
