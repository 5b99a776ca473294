//! LC resonance and plate-capacitor models of the sensor mat.

use std::f64::consts::PI;

use crate::error::{HodError, Result};

/// Vacuum permittivity in F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Resonant tank: coil `L`, fixed capacitor `C_k`, and the untouched sensor
/// capacitance `C_s0`. All values in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitParams {
    pub inductance: f64,
    pub fixed_capacitance: f64,
    pub base_sensor_capacitance: f64,
}

impl Default for CircuitParams {
    /// 10 µH, 100 pF, 50 pF: untouched resonance near 4.1 MHz.
    fn default() -> Self {
        CircuitParams {
            inductance: 10e-6,
            fixed_capacitance: 100e-12,
            base_sensor_capacitance: 50e-12,
        }
    }
}

impl CircuitParams {
    pub fn new(inductance: f64, fixed_capacitance: f64, base_sensor_capacitance: f64) -> Result<Self> {
        let p = CircuitParams {
            inductance,
            fixed_capacitance,
            base_sensor_capacitance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inductance.is_finite() && self.inductance > 0.0) {
            return Err(HodError::Domain(format!(
                "inductance must be > 0, got {}",
                self.inductance
            )));
        }
        if !(self.fixed_capacitance.is_finite() && self.fixed_capacitance > 0.0) {
            return Err(HodError::Domain(format!(
                "fixed capacitance must be > 0, got {}",
                self.fixed_capacitance
            )));
        }
        if !(self.base_sensor_capacitance.is_finite() && self.base_sensor_capacitance >= 0.0) {
            return Err(HodError::Domain(format!(
                "base sensor capacitance must be >= 0, got {}",
                self.base_sensor_capacitance
            )));
        }
        Ok(())
    }

    /// Frequency of the untouched wheel.
    pub fn untouched_frequency(&self) -> Result<f64> {
        resonant_frequency(self, self.base_sensor_capacitance)
    }
}

/// `f = 1 / (2π·sqrt(L·(C_k + C_s)))`.
pub fn resonant_frequency(params: &CircuitParams, sensor_capacitance: f64) -> Result<f64> {
    if !(params.inductance > 0.0) {
        return Err(HodError::Domain(format!(
            "inductance must be > 0, got {}",
            params.inductance
        )));
    }
    if !(sensor_capacitance >= 0.0) {
        return Err(HodError::Domain(format!(
            "sensor capacitance must be >= 0, got {sensor_capacitance}"
        )));
    }
    let total = params.fixed_capacitance + sensor_capacitance;
    if !(total > 0.0) || !total.is_finite() {
        return Err(HodError::Domain(format!("total capacitance must be > 0, got {total}")));
    }
    let f = 1.0 / (2.0 * PI * (params.inductance * total).sqrt());
    if !f.is_finite() {
        return Err(HodError::Domain("resonant frequency is not finite".into()));
    }
    Ok(f)
}

/// Inverse of [`resonant_frequency`]: the sensor capacitance that makes the
/// tank oscillate at `frequency`.
pub fn capacitance_from_frequency(params: &CircuitParams, frequency: f64) -> Result<f64> {
    if !(frequency > 0.0) || !frequency.is_finite() {
        return Err(HodError::Domain(format!("frequency must be > 0, got {frequency}")));
    }
    if !(params.inductance > 0.0) {
        return Err(HodError::Domain(format!(
            "inductance must be > 0, got {}",
            params.inductance
        )));
    }
    let omega = 2.0 * PI * frequency;
    let total = 1.0 / (params.inductance * omega * omega);
    let sensor = total - params.fixed_capacitance;
    // A frequency marginally above the C_s = 0 limit comes out as a tiny
    // negative number from rounding alone.
    let slack = 1e-12 * params.fixed_capacitance;
    if sensor < -slack {
        return Err(HodError::Domain(format!(
            "frequency {frequency} Hz implies negative sensor capacitance {sensor} F"
        )));
    }
    Ok(sensor.max(0.0))
}

/// Parallel-plate approximation of the mat against a nearby object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateModel {
    pub relative_permittivity: f64,
    pub area: f64,
    pub distance: f64,
}

impl PlateModel {
    pub fn new(relative_permittivity: f64, area: f64, distance: f64) -> Result<Self> {
        let m = PlateModel {
            relative_permittivity,
            area,
            distance,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.relative_permittivity >= 1.0) {
            return Err(HodError::Domain(format!(
                "relative permittivity must be >= 1, got {}",
                self.relative_permittivity
            )));
        }
        if !(self.area > 0.0) {
            return Err(HodError::Domain(format!("plate area must be > 0, got {}", self.area)));
        }
        if !(self.distance > 0.0) {
            return Err(HodError::Domain(format!(
                "plate distance must be > 0, got {}",
                self.distance
            )));
        }
        Ok(())
    }

    /// `ε0·εr·A/d` in farads.
    pub fn capacitance(&self) -> Result<f64> {
        plate_capacitance(self)
    }
}

pub fn plate_capacitance(model: &PlateModel) -> Result<f64> {
    model.validate()?;
    Ok(EPSILON_0 * model.relative_permittivity * model.area / model.distance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_resonance() {
        let p = CircuitParams::new(1.0 / (4.0 * PI * PI), 0.5, 0.5).unwrap();
        let f = resonant_frequency(&p, 0.5).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resonance_of_10uh_100pf() {
        // 1 / (2π·sqrt(1e-5 · 1e-10)) evaluated with mpmath at 50 digits.
        let expected = 5_032_921.210_448_704_f64;
        let p = CircuitParams::new(10e-6, 100e-12, 0.0).unwrap();
        let f = resonant_frequency(&p, 0.0).unwrap();
        assert!(((f - expected) / expected).abs() < 1e-12, "{f}");
    }

    #[test]
    fn resonance_decreases_with_capacitance() {
        let p = CircuitParams::default();
        let a = resonant_frequency(&p, 10e-12).unwrap();
        let b = resonant_frequency(&p, 20e-12).unwrap();
        assert!(a > b);
    }

    #[test]
    fn resonance_rejects_bad_inputs() {
        let bad = CircuitParams {
            inductance: 0.0,
            ..CircuitParams::default()
        };
        assert!(resonant_frequency(&bad, 1e-12).is_err());
        assert!(resonant_frequency(&CircuitParams::default(), -1e-12).is_err());
        assert!(CircuitParams::new(-1.0, 1e-12, 0.0).is_err());
    }

    #[test]
    fn untouched_frequency_maps_back_to_base() {
        let p = CircuitParams::default();
        let f0 = p.untouched_frequency().unwrap();
        let c = capacitance_from_frequency(&p, f0).unwrap();
        assert!(((c - p.base_sensor_capacitance) / p.base_sensor_capacitance).abs() < 1e-9);
    }

    #[test]
    fn frequency_above_untouched_maximum_is_rejected() {
        let p = CircuitParams::new(10e-6, 100e-12, 0.0).unwrap();
        let f0 = p.untouched_frequency().unwrap();
        assert!(capacitance_from_frequency(&p, f0 * 1.01).is_err());
        assert!(capacitance_from_frequency(&p, 0.0).is_err());
        // With a non-zero base the physical limit is still C_s = 0.
        let d = CircuitParams::default();
        let fmax = resonant_frequency(&d, 0.0).unwrap();
        assert!(capacitance_from_frequency(&d, fmax * 1.001).is_err());
    }

    #[test]
    fn plate_unit_case() {
        let m = PlateModel::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(m.capacitance().unwrap(), 8.854_187_812_8e-12);
    }

    #[test]
    fn plate_water_like_dielectric() {
        // 8.8541878128e-12 · 80 · 0.01 / 0.001 = 7.08335025024e-9 F, by hand.
        let m = PlateModel::new(80.0, 0.01, 0.001).unwrap();
        let c = m.capacitance().unwrap();
        assert!(((c - 7.083_350_250_24e-9) / 7.083_350_250_24e-9).abs() < 1e-12);
    }

    #[test]
    fn halving_distance_doubles_capacitance() {
        let a = PlateModel::new(3.0, 2e-4, 2e-3).unwrap().capacitance().unwrap();
        let b = PlateModel::new(3.0, 2e-4, 1e-3).unwrap().capacitance().unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn plate_rejects_degenerate_geometry() {
        assert!(PlateModel::new(1.0, 0.0, 1.0).is_err());
        assert!(PlateModel::new(1.0, 1.0, 0.0).is_err());
        assert!(PlateModel::new(0.5, 1.0, 1.0).is_err());
    }
}
