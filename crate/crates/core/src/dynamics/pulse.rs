use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// QCR drive: a dc offset plus a net-zero square wave, on for `duration` ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasPulse {
    /// mV
    pub dc_offset: f64,
    /// mV
    pub amplitude: f64,
    /// ns
    pub duration: f64,
    /// Square-wave period in ns (100 MHz fundamental by default).
    #[serde(default = "default_period")]
    pub period: f64,
    /// Edge ramp time in ns; 0 is an ideal square wave.
    #[serde(default)]
    pub rise_time: f64,
}

fn default_period() -> f64 {
    10.0
}

impl Default for BiasPulse {
    fn default() -> Self {
        Self {
            dc_offset: 0.0,
            amplitude: 1.2,
            duration: 100.0,
            period: default_period(),
            rise_time: 0.0,
        }
    }
}

impl BiasPulse {
    pub fn square(amplitude: f64, duration: f64) -> Self {
        Self {
            amplitude,
            duration,
            ..Default::default()
        }
    }

    /// A pulse that never switches on.
    pub fn off() -> Self {
        Self {
            amplitude: 0.0,
            duration: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration >= 0.0) {
            return Err(invalid("pulse.duration", "must be >= 0"));
        }
        if !(self.period > 0.0) {
            return Err(invalid("pulse.period", "must be > 0"));
        }
        if !(self.rise_time >= 0.0 && self.rise_time <= 0.5 * self.period) {
            return Err(invalid("pulse.rise_time", "must be in [0, period/2]"));
        }
        if !self.dc_offset.is_finite() || !self.amplitude.is_finite() {
            return Err(invalid("pulse.amplitude", "must be finite"));
        }
        Ok(())
    }

    pub fn is_idle(&self) -> bool {
        self.duration == 0.0 || (self.amplitude == 0.0 && self.dc_offset == 0.0)
    }
}

/// Bias in mV at time `t` (ns).
pub fn pulse_voltage(pulse: &BiasPulse, t: f64) -> f64 {
    if !(t >= 0.0 && t < pulse.duration) {
        return 0.0;
    }
    let p = pulse.period;
    let phase = t.rem_euclid(p);
    let shape = if pulse.rise_time == 0.0 {
        if phase < 0.5 * p {
            1.0
        } else {
            -1.0
        }
    } else {
        // odd triangle wave with unit slope, clipped into a trapezoid
        let tri = 0.25 * p - ((phase + 0.25 * p).rem_euclid(p) - 0.5 * p).abs();
        (tri / (0.5 * pulse.rise_time)).clamp(-1.0, 1.0)
    };
    pulse.dc_offset + pulse.amplitude * shape
}
