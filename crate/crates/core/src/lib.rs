//! Simulation and convergence analysis of iterative learning extremum
//! seeking (ILES).
//!
//! The crate integrates dithered extremum-seeking iterations over a finite
//! horizon together with their Lie bracket approximations, implements the
//! matching integral-type ILC law and its error operator `T_k`, and checks
//! the contraction and boundedness constants numerically.
//!
//! ```
//! use iles::{contraction_params, QuadraticMap, IlesConfig, run_campaign, Retain};
//!
//! let cp = contraction_params(0.1, 1.0, 0.3, 1, 1.0).unwrap();
//! assert!(cp.rho < 1.0);
//!
//! let map = QuadraticMap::sine_example();
//! let cfg = IlesConfig::new(0.1, 0.3, 15.0, 20.0, 0.01, 3, 64, 1.0).unwrap();
//! let campaign = run_campaign(&map, &cfg, &Retain::None).unwrap();
//! assert_eq!(campaign.reports.len(), 3);
//! ```

pub mod analysis;
pub mod error;
pub mod ilc;
pub mod es;
pub mod integrator;
pub mod plant;
pub mod trajectory;

pub use analysis::{
    ball_convergence_check, bounds, bounds_from, c_norm_feasibility, contraction_params,
    contraction_params_for, lambda0, log_log_fit, omega_scaling_study, verify_contraction,
    BoundSet, ContractionParams, ContractionReport, ScalingStudy,
};
pub use error::{Error, Result};
pub use ilc::{
    apply_tk, big_gamma_k, fixed_point_y_inf, gamma_k, ilc_beta0_step, ilc_closed_form, ilc_step,
    j_index, run_ilc_campaign, IlcCampaign, IlcLaw, IlcParams, IlcReport, IlcState, Iteration,
    Retain,
};
pub use es::{
    classic_es, disturbance_norm, equivalent_ilc_params, iles_step, mlb_step, run_campaign,
    CampaignError, IlesCampaign, IlesConfig, IlesMemory, IterationReport,
};
pub use integrator::{rk4_integrate, rk4_integrate_recorded, OdeProblem};
pub use plant::{Evaluable, QuadraticMap, Waveform, WaveformVector};
pub use trajectory::{c_norm, lambda_norm, make_grid, weighted_l2, NormKind, TimeGrid, Trajectory};

/// The guide's chapters, compiled so their examples stay in sync.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/trajectories.md")]
    pub struct Trajectories;
    #[doc = include_str!("../../../book/src/plant.md")]
    pub struct Plant;
    #[doc = include_str!("../../../book/src/integration.md")]
    pub struct Integration;
    #[doc = include_str!("../../../book/src/ilc.md")]
    pub struct Ilc;
    #[doc = include_str!("../../../book/src/iles.md")]
    pub struct Iles;
    #[doc = include_str!("../../../book/src/analysis.md")]
    pub struct Analysis;
}
