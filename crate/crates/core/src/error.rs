//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown group label `{0}` (expected Z2, Z3, ZN:<N> or S3)")]
    UnknownGroup(String),
    #[error("cyclic group order must be at least 2, got {0}")]
    GroupOrderTooSmall(usize),
    #[error("element index {index} out of range for group of order {order}")]
    ElementOutOfRange { index: usize, order: usize },

    #[error("lattice dimensions must be positive, got {lx}x{ly}")]
    EmptyLattice { lx: usize, ly: usize },
    #[error("vertex ({x},{y}) is outside the lattice")]
    VertexOutOfBounds { x: i64, y: i64 },
    #[error("no link at ({x},{y}) direction {dir}")]
    NoSuchLink { x: usize, y: usize, dir: u8 },
    #[error("rectangle of size {w}x{h} is degenerate")]
    DegenerateRectangle { w: usize, h: usize },
    #[error("rectangle ({x},{y})+{w}x{h} does not fit the lattice")]
    RectangleOutOfBounds { x: usize, y: usize, w: usize, h: usize },
    #[error("path is empty")]
    EmptyPath,
    #[error("path step {step} is not contiguous with the previous step")]
    PathNotContiguous { step: usize },
    #[error("path endpoints coincide; a string operator needs distinct endpoints")]
    EndpointsCoincide,
    #[error("path revisits vertex ({x},{y}); string paths must be simple")]
    PathNotSimple { x: usize, y: usize },
    #[error("loop does not close (starts at ({sx},{sy}), ends at ({ex},{ey}))")]
    LoopNotClosed { sx: usize, sy: usize, ex: usize, ey: usize },
    #[error("closed loop on an open lattice needs at least 4 steps, got {0}")]
    LoopTooShort(usize),
    #[error("invalid path/loop syntax `{0}`: {1}")]
    BadPathSyntax(String, String),

    #[error("Hilbert dimension {required} exceeds the desk-scale guard {allowed}")]
    DimensionGuard { required: u128, allowed: u64 },
    #[error("operator has {got} entries but the target block needs {want}")]
    ShapeMismatch { got: usize, want: usize },
    #[error("states live on different layouts")]
    LayoutMismatch,
    #[error("subsystem index {0} out of range ({1} qudits)")]
    QuditOutOfRange(usize, usize),
    #[error("duplicate subsystem index {0} in operator application")]
    DuplicateSubsystem(usize),
    #[error("mode index {0} out of range ({1} fermionic modes)")]
    ModeOutOfRange(usize, usize),
    #[error("layout has no ancilla qudit")]
    MissingAncilla,
    #[error("layout has no ancilla fermion modes")]
    MissingChiModes,
    #[error("malformed state spec: {0}")]
    BadStateSpec(String),
    #[error("state norm {0} is not 1 within 1e-12; normalize before running a protocol")]
    NotNormalized(f64),

    #[error("state has no gauge-invariant component (projected norm {0:.3e})")]
    ProjectionVanished(f64),

    #[error("ancilla qudit is not in the reference state |e~> (leakage {0:.3e})")]
    AncillaNotReset(f64),
    #[error("ancilla fermion modes are initially occupied (weight {0:.3e})")]
    ChiOccupied(f64),
    #[error("string paths sharing endpoint ({x},{y}) cannot run in parallel")]
    SharedEndpoint { x: usize, y: usize },

    #[error("schedule parse error at line {line}: {msg}")]
    ScheduleParse { line: usize, msg: String },
    #[error("schedule was compiled for {expected} but the state lives on {found}")]
    ScheduleContextMismatch { expected: String, found: String },
    #[error("{0} is only defined for the Z2 group")]
    RequiresZ2(&'static str),

    #[error("dense oracle supports dimensions up to {allowed}, layout has {required}")]
    DenseOracleTooLarge { required: usize, allowed: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
