//! Guiding-velocity schedules, ALE inertia operators, loads and global assembly.

pub mod assembly;
pub mod loads;
pub mod operators;
pub mod schedule;

pub use assembly::{Assembler, AssemblyInput, GlobalSystem, KinematicState, NewmarkParams};
pub use loads::{ExternalLoads, SurfaceLoad};
pub use operators::{element_ale_operators, element_internal, ElementAleOperators, ElementInternal};
pub use schedule::{Amplitude, GuidingSchedule, PiecewiseLinear, TriangularWave};
