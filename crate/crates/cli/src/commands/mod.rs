pub mod advantages;
pub mod curate;
pub mod eval;
pub mod mask;
pub mod rollout;
pub mod score;

/// Exit code for full success.
pub const EXIT_OK: i32 = 0;
/// Exit code when some records failed and error records were embedded.
pub const EXIT_PARTIAL: i32 = 2;
/// Exit code for transport-level failures.
pub const EXIT_TRANSPORT: i32 = 3;
