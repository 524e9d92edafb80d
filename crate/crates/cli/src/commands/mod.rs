pub mod compress;
pub mod eval;
pub mod kb;
pub mod map;

/// A command failure carrying its process exit code.
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: i32, error: anyhow::Error) -> Self {
        Self { code, error }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

pub type CmdResult = Result<(), Failure>;

pub const EXIT_PARSE_FATAL: i32 = 2;
pub const EXIT_AUTH: i32 = 3;
pub const EXIT_NO_OVERLAP: i32 = 4;
