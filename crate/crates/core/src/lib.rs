//! P-adic multiresolution grids, generalized Haar and Price systems, additive
//! functions on P-adic parallelepipeds, and their recovery from the derivative
//! through truncated (AH) integrals.
//!
//! The crate works with finitely supported series only. Every limit in the
//! underlying theory then stabilizes at a finite rank, and the library
//! computes that stabilized value directly.
//!
//! ```
//! use std::sync::Arc;
//! use num_complex::Complex64;
//! use padic_core::{additive_fn, psi_eval, Cell, CoeffMap, GridConfig, MultiIndex};
//!
//! let grid = Arc::new(GridConfig::uniform(2, 3, 1).unwrap());
//! let mut coeffs = CoeffMap::haar(grid.clone());
//! coeffs.insert(MultiIndex::new(vec![0]), Complex64::new(1.0, 0.0)).unwrap();
//! let psi = additive_fn(&coeffs).unwrap();
//! let half = Cell::uniform(&grid, 1, vec![0]).unwrap();
//! assert_eq!(psi_eval(&psi, &half).unwrap(), Complex64::new(0.5, 0.0));
//! ```

pub mod ah;
pub mod counterexample;
pub mod error;
pub mod grid;
pub mod json;
pub mod recovery;
pub mod reduce;
pub mod series;
pub mod step;
pub mod systems;

use num_traits::ToPrimitive;

pub use error::{Error, Result};

/// Exact rational number.
pub type Frac = num_rational::BigRational;

pub use ah::{
    a_integral, ah_integral, check_family, integral, tail_integral, truncate, truncate_scaled, upgrade_family,
    AReport, AhOptions, AhReport, AlphaTail, FamilyReport, HFamily, HMember, TruncationPolicy, UpgradeReport,
};
pub use counterexample::{
    build_example_coeffs, build_example_hfamily, example_density, example_end_to_end, example_psi,
    verify_ah_success, verify_lambda_failure, AhSuccess, ExampleReport, ExampleSpec, LambdaFailure,
};
pub use grid::{cell_of_point, decompose_box, modulus, refine_cell, BranchSeq, Cell, GridConfig, Partition, PointCode};
pub use recovery::{
    condition_check, lambda_condition_check, recover_additive, recover_haar_coeff, recover_price_coeff,
    ConditionReport, LambdaReport, RecoveryReport, Tolerances,
};
pub use series::{
    additive_fn, derivative, majorant, partial_sum, price_coeffs_from_haar, psi_eval, psi_eval_exact, AdditiveFn,
    CoeffMap, CoeffMode, Direction,
};
pub use step::StepFunction;
pub use systems::{
    classical_haar_eval, classical_to_generalized, gamma_matrix, gen_haar_eval, generalized_to_classical,
    haar_decode, haar_encode, haar_sup_norm_sq, inner_product, price_eval, tensor_haar_step, tensor_price_step,
    GammaBlock, HaarIndex, MultiIndex, PriceIndex, UnitValue,
};

/// Nearest float to an exact rational.
pub fn frac_to_f64(v: &Frac) -> f64 {
    v.to_f64().unwrap_or_else(|| {
        if v.numer().sign() == num_bigint::Sign::Minus {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// The exact rational value of a finite float.
pub fn f64_to_frac(v: f64) -> Frac {
    Frac::from_float(v).expect("finite float")
}
