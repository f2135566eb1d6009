//! Pauli-consistent ensemble Monte Carlo for conduction-band electrons in
//! monolayer graphene.
//!
//! Modules, bottom-up:
//!
//! * [`physics`]: Dirac-cone kinematics and electron–phonon rates.
//! * [`ee`]: screened electron–electron scattering and its two rate estimators.
//! * [`ensemble`]: the occupancy-limited momentum grid and Pauli tests.
//! * [`engine`]: drift–collision time stepping with null-collision flights.
//! * [`analysis`]: steady-window statistics and grid-locked oscillation tools.
//! * [`config`] and [`io`]: key=value configuration and run directory files.
//!
//! All quantities use eV, nm and ps internally.

pub mod analysis;
pub mod config;
pub mod ee;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod physics;
pub mod units;
pub mod wavevector;

pub use analysis::{HarmonicFit, PeriodEstimate, SteadyWindow, WindowStats};
pub use config::{EeMode, SimConfig};
pub use ee::{BetaMesh, EllipseGeom, ScreeningParams};
pub use engine::{EventCounters, Mechanism, RunOutput, Simulation, TimeSeries};
pub use ensemble::{KGrid, Observables, OccupancyField, ParticleStore, ShiftState};
pub use error::{Error, Result};
pub use physics::{EphChannel, EphRateSet, PhononParams};
pub use units::UnitSystem;
pub use wavevector::Wavevector;
