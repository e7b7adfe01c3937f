//! Builds the system described by a config and executes its requests,
//! sequentially or on one thread per request.

use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use gaugeloop::gauge_ops::{gauge_project, hamiltonian_expectation, Couplings};
use gaugeloop::group::build_group;
use gaugeloop::hilbert::{build_layout, HilbertLayout, LinkState, StatePrep, StateVector};
use gaugeloop::lattice::{build_lattice, parse_loop, parse_path, Dir, LoopSpec, PathSpec, Vertex};
use gaugeloop::oracle::MesonOp;
use gaugeloop::protocols::{
    check_strings_parallel, compile_meson, compile_wilson, excite_meson, excite_wilson,
    hamiltonian_via_protocols, measure_meson, measure_wilson, ProtocolMode,
};

use crate::config::{LinkStateSpec, ScenarioConfig, StateSpec};

#[derive(Debug, Clone)]
pub enum ResolvedKind {
    Wilson {
        lp: LoopSpec,
        mode: ProtocolMode,
    },
    Meson {
        path: PathSpec,
        which: MesonOp,
        mode: ProtocolMode,
    },
    Hamiltonian {
        couplings: Couplings,
    },
}

#[derive(Debug, Clone)]
pub struct ResolvedRequest {
    pub id: String,
    pub kind_label: String,
    pub spec_echo: String,
    pub which: Option<String>,
    pub mode_label: String,
    pub kind: ResolvedKind,
}

pub struct Scenario {
    pub layout: Arc<HilbertLayout>,
    pub state: StateVector,
    pub state_echo: String,
    pub requests: Vec<ResolvedRequest>,
    pub tolerance: f64,
    pub crosscheck: bool,
}

/// One row of the output: protocol value, oracle value when cross-checked,
/// and the residual. For excitation requests the values are the norms of
/// the excited states and `abs_diff` is the full vector residual.
#[derive(Debug, Clone, Serialize)]
pub struct RequestRecord {
    pub id: String,
    pub kind: String,
    pub spec: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub which: Option<String>,
    pub mode: String,
    pub protocol_re: f64,
    pub protocol_im: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_re: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_im: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_diff: Option<f64>,
    pub norm: f64,
    pub gate_count: usize,
    pub wall_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
}

fn link_key_to_id(
    layout: &HilbertLayout,
    key: (usize, usize, u8),
) -> Result<usize> {
    let dir = Dir::from_index(key.2).ok_or_else(|| anyhow!("link direction must be 1 or 2"))?;
    Ok(layout
        .geometry()
        .link_id(Vertex::new(key.0, key.1), dir)?)
}

fn build_state(config: &ScenarioConfig, layout: &Arc<HilbertLayout>, seed_override: Option<u64>) -> Result<(StateVector, String)> {
    let state = match (&config.state, seed_override) {
        (StateSpec::StaggeredVacuum, _) => {
            StateVector::prepare(layout.clone(), &StatePrep::staggered_vacuum(layout))?
        }
        (StateSpec::Random(seed), ov) => StateVector::random(layout.clone(), ov.unwrap_or(*seed)),
        (StateSpec::RandomGaugeInvariant(seed), ov) => {
            let mut s = StateVector::random(layout.clone(), ov.unwrap_or(*seed));
            gauge_project(&mut s)?;
            s
        }
        (StateSpec::Product, _) => {
            let default = match config.link_default {
                LinkStateSpec::Element(g) => LinkState::Element(g),
                LinkStateSpec::Singlet => LinkState::Singlet,
            };
            let mut prep = StatePrep::uniform(layout, default, 0);
            let full = (1u32 << layout.comps()) - 1;
            if let Some(occ) = config.vertex_default {
                prep.occupations = vec![occ.min(full); layout.geometry().vertex_count()];
            }
            for (key, ls) in &config.link_overrides {
                let id = link_key_to_id(layout, *key)?;
                prep.links[id] = match ls {
                    LinkStateSpec::Element(g) => LinkState::Element(*g),
                    LinkStateSpec::Singlet => LinkState::Singlet,
                };
            }
            for ((x, y), occ) in &config.vertex_overrides {
                let v = Vertex::new(*x, *y);
                if !layout.geometry().contains(v) {
                    bail!("vertex override ({x},{y}) outside lattice");
                }
                let vi = layout.geometry().vertex_index(v);
                prep.occupations[vi] = (*occ).min(full);
            }
            StateVector::prepare(layout.clone(), &prep)?
        }
    };
    let echo = match (&config.state, seed_override) {
        (StateSpec::StaggeredVacuum, _) => "staggered_vacuum".to_string(),
        (StateSpec::Random(seed), ov) => format!("random:{}", ov.unwrap_or(*seed)),
        (StateSpec::RandomGaugeInvariant(seed), ov) => {
            format!("random_gauge_invariant:{}", ov.unwrap_or(*seed))
        }
        (StateSpec::Product, _) => "product".to_string(),
    };
    Ok((state, echo))
}

fn parse_mode(mode: &str, line: usize) -> Result<ProtocolMode> {
    match mode {
        "measure" => Ok(ProtocolMode::Measure),
        "excite" => Ok(ProtocolMode::Excite),
        other => bail!("line {line}: unknown mode `{other}`"),
    }
}

/// Builds the group, lattice, layout and initial state, and validates
/// every request before anything is executed.
pub fn build(config: &ScenarioConfig, seed_override: Option<u64>) -> Result<Scenario> {
    let group = build_group(&config.group)?;
    let geometry = build_lattice(config.lx, config.ly, config.boundary)?;
    let layout = Arc::new(build_layout(group.clone(), geometry.clone(), false)?);

    let mut requests = Vec::new();
    let mut needs_ancilla = false;
    for req in &config.requests {
        let mode = parse_mode(&req.mode, req.line)?;
        let kind = match req.kind.as_str() {
            "wilson" => {
                needs_ancilla = true;
                let spec = req
                    .loop_spec
                    .as_deref()
                    .ok_or_else(|| anyhow!("line {}: wilson request needs `loop = ...`", req.line))?;
                ResolvedKind::Wilson {
                    lp: parse_loop(layout.geometry(), spec)
                        .with_context(|| format!("request `{}`", req.id))?,
                    mode,
                }
            }
            "meson" => {
                needs_ancilla = true;
                let spec = req
                    .path_spec
                    .as_deref()
                    .ok_or_else(|| anyhow!("line {}: meson request needs `path = ...`", req.line))?;
                let which: MesonOp = req
                    .which
                    .parse()
                    .map_err(|e| anyhow!("line {}: {e}", req.line))?;
                if which == MesonOp::Script && mode == ProtocolMode::Excite {
                    bail!(
                        "line {}: excitation needs which = M or Mprime",
                        req.line
                    );
                }
                let path = parse_path(layout.geometry(), spec)
                    .with_context(|| format!("request `{}`", req.id))?;
                path.check_string(layout.geometry())?;
                ResolvedKind::Meson { path, which, mode }
            }
            "hamiltonian" => {
                let mut couplings = Couplings::uniform(
                    layout.n_links(),
                    config.lambda_gm_default,
                    config.lambda_b,
                );
                for (key, lam) in &config.lambda_gm_overrides {
                    let id = link_key_to_id(&layout, *key)?;
                    couplings.lambda_gm[id] = *lam;
                }
                ResolvedKind::Hamiltonian { couplings }
            }
            other => bail!("line {}: unknown request kind `{other}`", req.line),
        };
        let spec_echo = match &kind {
            ResolvedKind::Wilson { .. } => req.loop_spec.clone().unwrap_or_default(),
            ResolvedKind::Meson { .. } => req.path_spec.clone().unwrap_or_default(),
            ResolvedKind::Hamiltonian { couplings } => format!(
                "lambda_gm={} lambda_b={}",
                config.lambda_gm_default, couplings.lambda_b
            ),
        };
        requests.push(ResolvedRequest {
            id: req.id.clone(),
            kind_label: req.kind.clone(),
            spec_echo,
            which: match &kind {
                ResolvedKind::Meson { which, .. } => Some(which.to_string()),
                _ => None,
            },
            mode_label: req.mode.clone(),
            kind,
        });
    }
    if needs_ancilla {
        // protocols embed into the full register; check that guard now
        build_layout(group, geometry, true)?;
    }
    let (state, state_echo) = build_state(config, &layout, seed_override)?;
    Ok(Scenario {
        layout,
        state,
        state_echo,
        requests,
        tolerance: config.tolerance,
        crosscheck: config.crosscheck,
    })
}

fn run_one(
    scenario: &Scenario,
    req: &ResolvedRequest,
    crosscheck: bool,
    tolerance: f64,
) -> Result<RequestRecord> {
    let state = &scenario.state;
    let mut record = RequestRecord {
        id: req.id.clone(),
        kind: req.kind_label.clone(),
        spec: req.spec_echo.clone(),
        which: req.which.clone(),
        mode: req.mode_label.clone(),
        protocol_re: 0.0,
        protocol_im: 0.0,
        oracle_re: None,
        oracle_im: None,
        abs_diff: None,
        norm: state.norm(),
        gate_count: 0,
        wall_ms: 0.0,
        passed: None,
    };
    match &req.kind {
        ResolvedKind::Wilson { lp, mode } => match mode {
            ProtocolMode::Measure => {
                let r = measure_wilson(state, lp, crosscheck)?;
                record.protocol_re = r.value.re;
                record.protocol_im = r.value.im;
                record.oracle_re = r.oracle.map(|o| o.re);
                record.oracle_im = r.oracle.map(|o| o.im);
                record.abs_diff = r.abs_diff;
                record.gate_count = r.gate_count;
                record.wall_ms = r.wall.as_secs_f64() * 1e3;
            }
            ProtocolMode::Excite => {
                let e = excite_wilson(state, lp, crosscheck)?;
                record.protocol_re = e.norm;
                record.norm = e.norm;
                record.abs_diff = e.oracle_residual;
                record.gate_count = e.gate_count;
                record.wall_ms = e.wall.as_secs_f64() * 1e3;
            }
        },
        ResolvedKind::Meson { path, which, mode } => match mode {
            ProtocolMode::Measure => {
                let r = measure_meson(state, path, *which, crosscheck)?;
                record.protocol_re = r.value.re;
                record.protocol_im = r.value.im;
                record.oracle_re = r.oracle.map(|o| o.re);
                record.oracle_im = r.oracle.map(|o| o.im);
                record.abs_diff = r.abs_diff;
                record.gate_count = r.gate_count;
                record.wall_ms = r.wall.as_secs_f64() * 1e3;
            }
            ProtocolMode::Excite => {
                let e = excite_meson(state, path, *which, crosscheck)?;
                record.protocol_re = e.norm;
                record.norm = e.norm;
                record.abs_diff = e.oracle_residual;
                record.gate_count = e.gate_count;
                record.wall_ms = e.wall.as_secs_f64() * 1e3;
            }
        },
        ResolvedKind::Hamiltonian { couplings } => {
            let t0 = std::time::Instant::now();
            let (proto, gates) = hamiltonian_via_protocols(state, couplings)?;
            record.protocol_re = proto;
            record.gate_count = gates;
            if crosscheck {
                let direct = hamiltonian_expectation(state, couplings)?;
                record.oracle_re = Some(direct);
                record.oracle_im = Some(0.0);
                record.abs_diff = Some((proto - direct).abs());
            }
            record.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
        }
    }
    if crosscheck {
        record.passed = record.abs_diff.map(|d| d < tolerance);
    }
    Ok(record)
}

/// Runs every request in declared order; with `parallel` each request
/// runs on its own thread against the shared read-only state.
pub fn run_all(scenario: &Scenario, crosscheck: bool, parallel: bool) -> Result<Vec<RequestRecord>> {
    let crosscheck = crosscheck || scenario.crosscheck;
    let tolerance = scenario.tolerance;
    if !parallel {
        return scenario
            .requests
            .iter()
            .map(|r| run_one(scenario, r, crosscheck, tolerance))
            .collect();
    }
    // strings sharing an endpoint do not commute; refuse to run them side
    // by side
    let paths: Vec<&PathSpec> = scenario
        .requests
        .iter()
        .filter_map(|r| match &r.kind {
            ResolvedKind::Meson { path, .. } => Some(path),
            _ => None,
        })
        .collect();
    check_strings_parallel(&paths)?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = scenario
            .requests
            .iter()
            .map(|r| scope.spawn(move || run_one(scenario, r, crosscheck, tolerance)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| anyhow!("request thread panicked"))?)
            .collect()
    })
}

/// Schedule text for one request, with the request's config spec echoed
/// in the header.
pub fn export_schedule_text(scenario: &Scenario, id: &str) -> Result<String> {
    let req = scenario
        .requests
        .iter()
        .find(|r| r.id == id)
        .ok_or_else(|| anyhow!("unknown request id `{id}`"))?;
    let mut schedule = match &req.kind {
        ResolvedKind::Wilson { lp, mode } => compile_wilson(&scenario.layout, lp, *mode),
        ResolvedKind::Meson { path, which, mode } => {
            compile_meson(&scenario.layout, path, *which, *mode)?
        }
        ResolvedKind::Hamiltonian { .. } => {
            bail!("request `{id}` is a direct observable; only wilson and meson requests compile to schedules")
        }
    };
    schedule.request = format!("{} {} {}", req.kind_label, req.mode_label, req.spec_echo);
    Ok(schedule.to_text())
}
