// SPDX-License-Identifier: Apache-2.0

//! Published fit parameters of nanodiamond (ND) and microdiamond (MD)
//! spectra at several laser powers, raw gauge.

use serde::{Deserialize, Serialize};

use super::model::{BasicParams, OdmrFitModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFit {
    pub sample: &'static str,
    pub power_uw: f64,
    pub params: BasicParams,
}

impl ReferenceFit {
    pub fn model(&self) -> OdmrFitModel {
        OdmrFitModel::Basic(self.params)
    }
}

#[allow(clippy::too_many_arguments)]
const fn row(
    sample: &'static str,
    power_uw: f64,
    c0: f64,
    c: f64,
    n: f64,
    k: f64,
    delta: f64,
    d_gs: f64,
) -> ReferenceFit {
    ReferenceFit { sample, power_uw, params: BasicParams { c0, c, n, k, delta, d_gs } }
}

pub const REFERENCE_FITS: [ReferenceFit; 24] = [
    row("ND01", 7.8, 1.15e-3, -9.98, 3.46, 3.68e1, 3.42, 2868.64),
    row("ND01", 39.4, 9.55e-4, -7.56, 3.57, 3.48e1, 2.94, 2868.28),
    row("ND01", 96.2, -2.38e-4, -5.43, 3.64, 3.40e1, 3.01, 2868.29),
    row("ND02", 1.6, 2.11e-3, -1.86e1, 3.63, 7.82e1, 5.19, 2869.22),
    row("ND02", 20.5, 1.16e-3, -6.55, 3.55, 3.10e1, 3.24, 2869.34),
    row("ND02", 96.0, 2.79e-4, -8.49, 4.11, 5.47e1, 3.35, 2869.20),
    row("ND03", 1.6, 9.93e-4, -5.79, 3.15, 2.41e1, 4.16, 2869.21),
    row("ND03", 20.5, 7.35e-4, -3.17, 3.20, 1.48e1, 2.61, 2869.40),
    row("ND03", 95.1, 1.71e-4, -1.88, 3.27, 1.39e1, 2.69, 2868.95),
    row("ND04", 1.5, 2.18e-3, -3.48, 2.83, 2.56e1, 5.40, 2868.39),
    row("ND04", 20.5, 1.04e-3, -4.61e1, 4.64, 2.51e2, 4.63, 2868.68),
    row("ND04", 96.0, 4.56e-6, -3.98, 3.65, 4.18e1, 3.80, 2868.28),
    row("MD01", 1.1, 9.73e-5, -1.82, 2.60, 8.83, 3.02, 2868.70),
    row("MD01", 5.0, 5.92e-4, -1.70, 2.74, 8.74, 2.57, 2868.55),
    row("MD01", 9.9, 5.80e-4, -1.39, 2.77, 8.41e1, 2.51, 2868.82),
    row("MD02", 0.4, -2.65e-3, -6.29e1, 2.95, 3.53e1, 5.49, 2869.50),
    row("MD02", 3.8, 2.45e-3, -5.99, 3.17, 2.77e1, 3.31, 2869.19),
    row("MD02", 9.9, 1.35e-3, -3.63, 3.17, 2.14e1, 2.58, 2869.29),
    row("MD03", 1.1, 2.56e-3, -3.52e1, 3.98, 1.32e2, 5.46, 2869.32),
    row("MD03", 5.5, 2.78e-3, -2.28e1, 4.12, 9.40e1, 4.25, 2869.03),
    row("MD03", 9.9, 1.95e-3, -1.54e1, 4.04, 7.12e1, 3.79, 2869.32),
    row("MD04", 1.0, -1.64e-3, -7.53, 3.44, 4.52e1, 5.61, 2869.10),
    row("MD04", 5.2, -6.14e-4, -3.65, 3.35, 2.57e1, 4.61, 2868.73),
    row("MD04", 9.9, -6.50e-4, -3.31, 3.48, 2.68e1, 4.38, 2868.65),
];
