//! Literature iteration-count tables shipped as data files, used by
//! `--compare` runs and by the acceptance checks.

use super::table::IterationTable;

macro_rules! reference_table {
    ($name:ident, $file:literal) => {
        pub fn $name() -> IterationTable {
            IterationTable::from_csv(include_str!(concat!("../../data/reference/", $file)))
                .expect("shipped reference tables parse")
        }
    };
}

reference_table!(stokes, "stokes.csv");
reference_table!(elasticity, "elasticity.csv");
reference_table!(poisson_control_beta_one, "poisson_control_beta_1e0.csv");
reference_table!(poisson_control_beta_small, "poisson_control_beta_1e-4.csv");
reference_table!(stokes_control_beta_one, "stokes_control_beta_1e0.csv");
