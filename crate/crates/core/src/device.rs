//! Voltage-controlled threshold memristor (VTEAM) with a linear state-to-resistance map.
//!
//! The state is the position `x` (meters) of the polarized region inside an
//! active layer of thickness `d`. Resistance and stored synaptic weight are both
//! affine in `x / d`:
//!
//! ```text
//! R = (r_off - r_on) * x / d + r_on
//! w = 100 * (2 x / d - 1)
//! ```
//!
//! State only moves when the applied voltage leaves the `[v_on, v_off]` window.
//! Within one constant-amplitude pulse the rate is constant, so pulses are
//! integrated in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight magnitude bound; stored weights live in `[-WEIGHT_LIMIT, WEIGHT_LIMIT]`.
pub const WEIGHT_LIMIT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Low-resistance bound, ohms.
    pub r_on: f64,
    /// High-resistance bound, ohms.
    pub r_off: f64,
    /// Active-layer thickness, meters.
    pub d: f64,
    /// Negative threshold, volts.
    pub v_on: f64,
    /// Positive threshold, volts.
    pub v_off: f64,
    /// Rate constant below `v_on`, m/s (negative).
    pub k_on: f64,
    /// Rate constant above `v_off`, m/s (positive).
    pub k_off: f64,
    pub alpha_on: f64,
    pub alpha_off: f64,
}

/// Reference write protocol used to derive default rate constants: a pulse of
/// `v_pos` (or `v_neg`) lasting `width` seconds moves the state by `step` of `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub v_pos: f64,
    pub v_neg: f64,
    pub width: f64,
    pub step: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            v_pos: 1.5,
            v_neg: -1.3,
            width: 2e-9,
            step: 0.1,
        }
    }
}

pub const DEFAULT_V_ON: f64 = -1.2;
pub const DEFAULT_V_OFF: f64 = 1.2;
pub const DEFAULT_ALPHA: f64 = 3.0;
pub const DEFAULT_THICKNESS: f64 = 50e-9;

impl DeviceParams {
    /// Builds a parameter set whose rate constants satisfy `cal` exactly.
    pub fn calibrated(
        r_on: f64,
        r_off: f64,
        d: f64,
        v_on: f64,
        v_off: f64,
        alpha: f64,
        cal: Calibration,
    ) -> Result<Self> {
        let rate = cal.step * d / cal.width;
        let pos_drive = cal.v_pos / v_off - 1.0;
        let neg_drive = cal.v_neg / v_on - 1.0;
        if !(pos_drive > 0.0 && neg_drive > 0.0) {
            return Err(Error::InvalidParams(format!(
                "calibration voltages {} / {} V must lie outside thresholds {} / {} V",
                cal.v_pos, cal.v_neg, v_on, v_off
            )));
        }
        let params = DeviceParams {
            r_on,
            r_off,
            d,
            v_on,
            v_off,
            k_on: -rate / neg_drive.powf(alpha),
            k_off: rate / pos_drive.powf(alpha),
            alpha_on: alpha,
            alpha_off: alpha,
        };
        params.validate()?;
        Ok(params)
    }

    /// Profile used for the single-device write/read demonstration (`r_on` = 40 kΩ).
    pub fn demo() -> Self {
        Self::calibrated(
            40e3,
            152e6,
            DEFAULT_THICKNESS,
            DEFAULT_V_ON,
            DEFAULT_V_OFF,
            DEFAULT_ALPHA,
            Calibration::default(),
        )
        .expect("demo profile is valid")
    }

    /// Profile at the Monte Carlo means (`r_on` = 150 kΩ, `r_off` = 152 MΩ, `d` = 50 nm).
    pub fn montecarlo() -> Self {
        Self::calibrated(
            150e3,
            152e6,
            DEFAULT_THICKNESS,
            DEFAULT_V_ON,
            DEFAULT_V_OFF,
            DEFAULT_ALPHA,
            Calibration::default(),
        )
        .expect("montecarlo profile is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.r_on,
            self.r_off,
            self.d,
            self.v_on,
            self.v_off,
            self.k_on,
            self.k_off,
            self.alpha_on,
            self.alpha_off,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite field".into()));
        }
        if !(self.r_off > self.r_on && self.r_on > 0.0) {
            return Err(Error::InvalidParams(format!(
                "need r_off > r_on > 0, got r_on = {}, r_off = {}",
                self.r_on, self.r_off
            )));
        }
        if self.d <= 0.0 {
            return Err(Error::InvalidParams(format!("d = {} must be positive", self.d)));
        }
        if !(self.v_on < 0.0 && self.v_off > 0.0) {
            return Err(Error::InvalidParams(format!(
                "need v_on < 0 < v_off, got {} / {}",
                self.v_on, self.v_off
            )));
        }
        if !(self.k_on < 0.0 && self.k_off > 0.0) {
            return Err(Error::InvalidParams(format!(
                "need k_on < 0 < k_off, got {} / {}",
                self.k_on, self.k_off
            )));
        }
        if self.alpha_on < 0.0 || self.alpha_off < 0.0 {
            return Err(Error::InvalidParams("alpha exponents must be >= 0".into()));
        }
        Ok(())
    }

    /// Largest read amplitude that leaves every state untouched.
    pub fn read_margin(&self) -> f64 {
        self.v_off.min(-self.v_on)
    }

    pub fn resistance(&self, state: MemristorState) -> f64 {
        (self.r_off - self.r_on) * (state.x / self.d) + self.r_on
    }

    pub fn weight_from_state(&self, state: MemristorState) -> f64 {
        WEIGHT_LIMIT * (2.0 * state.x / self.d - 1.0)
    }

    pub fn state_from_weight(&self, w: f64) -> Result<MemristorState> {
        check_weight(w)?;
        let x = self.d * (w / WEIGHT_LIMIT + 1.0) / 2.0;
        Ok(MemristorState { x: x.clamp(0.0, self.d) })
    }

    /// `dx/dt` at a constant voltage; exactly zero inside `[v_on, v_off]`.
    pub fn state_rate(&self, v: f64) -> f64 {
        if v > self.v_off {
            self.k_off * (v / self.v_off - 1.0).powf(self.alpha_off)
        } else if v < self.v_on {
            self.k_on * (v / self.v_on - 1.0).powf(self.alpha_on)
        } else {
            0.0
        }
    }

    pub fn apply_pulse(&self, state: MemristorState, pulse: Pulse) -> MemristorState {
        let rate = self.state_rate(pulse.amplitude);
        if rate == 0.0 || pulse.width == 0.0 {
            return state;
        }
        MemristorState {
            x: (state.x + rate * pulse.width).clamp(0.0, self.d),
        }
    }

    /// Charge delivered by a sub-threshold read of amplitude `v_read` held for `t` seconds.
    pub fn read_charge(&self, state: MemristorState, v_read: f64, t: f64) -> Result<f64> {
        if !(v_read > self.v_on && v_read < self.v_off) {
            return Err(Error::DestructiveRead {
                v_read,
                v_on: self.v_on,
                v_off: self.v_off,
            });
        }
        Ok(v_read * t / self.resistance(state))
    }
}

pub(crate) fn check_weight(w: f64) -> Result<()> {
    if !(-WEIGHT_LIMIT..=WEIGHT_LIMIT).contains(&w) {
        return Err(Error::OutOfRange {
            what: "weight",
            value: w,
            min: -WEIGHT_LIMIT,
            max: WEIGHT_LIMIT,
        });
    }
    Ok(())
}

/// Position of the polarized-region boundary, meters from the low-resistance end.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MemristorState {
    x: f64,
}

impl MemristorState {
    pub fn new(x: f64, params: &DeviceParams) -> Result<Self> {
        if !(0.0..=params.d).contains(&x) {
            return Err(Error::OutOfRange {
                what: "state x",
                value: x,
                min: 0.0,
                max: params.d,
            });
        }
        Ok(MemristorState { x })
    }

    /// State at a fraction of the active layer; the fraction is clamped to `[0, 1]`.
    pub fn from_fraction(fraction: f64, params: &DeviceParams) -> Self {
        MemristorState {
            x: fraction.clamp(0.0, 1.0) * params.d,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn fraction(&self, params: &DeviceParams) -> f64 {
        self.x / params.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub amplitude: f64,
    pub width: f64,
}

impl Pulse {
    pub fn new(amplitude: f64, width: f64) -> Result<Self> {
        if !(width >= 0.0 && width.is_finite()) || !amplitude.is_finite() {
            return Err(Error::OutOfRange {
                what: "pulse width",
                value: width,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        Ok(Pulse { amplitude, width })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub time: f64,
    pub resistance: f64,
    pub weight: f64,
}

/// Applies a time-ordered pulse train and records `(t, R, w)` after each pulse.
///
/// The first sample is the initial state at `t = 0` (or the first start time
/// if that is earlier).
pub fn run_schedule(
    initial: MemristorState,
    schedule: &[(f64, Pulse)],
    params: &DeviceParams,
) -> Result<(MemristorState, Vec<TraceSample>)> {
    let mut state = initial;
    let t_start = schedule.first().map_or(0.0, |(t, _)| t.min(0.0));
    let mut samples = Vec::with_capacity(schedule.len() + 1);
    samples.push(sample(t_start, state, params));

    let mut busy_until = f64::NEG_INFINITY;
    for (k, &(start, pulse)) in schedule.iter().enumerate() {
        if !start.is_finite() {
            return Err(Error::Schedule(format!("pulse {k} has non-finite start time")));
        }
        // start times from integer counters can undershoot the previous end by an ulp
        if start < busy_until - 1e-12 * busy_until.abs() {
            return Err(Error::Schedule(format!(
                "pulse {k} starts at {start} s before the previous pulse ends at {busy_until} s"
            )));
        }
        state = params.apply_pulse(state, pulse);
        busy_until = start + pulse.width;
        samples.push(sample(busy_until, state, params));
    }
    Ok((state, samples))
}

fn sample(time: f64, state: MemristorState, params: &DeviceParams) -> TraceSample {
    TraceSample {
        time,
        resistance: params.resistance(state),
        weight: params.weight_from_state(state),
    }
}

/// Write/read pulse train with write polarity alternating every block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlternatingSchedule {
    pub write_negative: f64,
    pub write_positive: f64,
    pub write_width: f64,
    pub read_amplitude: f64,
    pub read_width: f64,
    /// Length of one constant-polarity block.
    pub block: f64,
    pub end: f64,
    /// Whether the first block writes with the negative amplitude.
    pub start_negative: bool,
}

impl Default for AlternatingSchedule {
    fn default() -> Self {
        AlternatingSchedule {
            write_negative: -1.3,
            write_positive: 1.5,
            write_width: 2e-9,
            read_amplitude: 0.08,
            read_width: 23e-9,
            block: 500e-9,
            end: 2600e-9,
            start_negative: true,
        }
    }
}

impl AlternatingSchedule {
    pub fn period(&self) -> f64 {
        self.write_width + self.read_width
    }

    /// Expands into `(start, pulse)` pairs. Cycle `k` starts at `k * period`;
    /// times are generated from integer counters so block boundaries are exact
    /// multiples of the period.
    pub fn pulses(&self) -> Result<Vec<(f64, Pulse)>> {
        let period = self.period();
        if !(period > 0.0 && self.block >= period && self.end >= 0.0) {
            return Err(Error::Schedule(format!(
                "need 0 < period ({period} s) <= block ({} s) and end >= 0",
                self.block
            )));
        }
        let cycles_per_block = (self.block / period).round() as usize;
        let cycles = (self.end / period).round() as usize;
        let mut out = Vec::with_capacity(2 * cycles);
        for k in 0..cycles {
            let start = k as f64 * period;
            let negative = (k / cycles_per_block).is_multiple_of(2) == self.start_negative;
            let amp = if negative {
                self.write_negative
            } else {
                self.write_positive
            };
            out.push((start, Pulse::new(amp, self.write_width)?));
            out.push((
                start + self.write_width,
                Pulse::new(self.read_amplitude, self.read_width)?,
            ));
        }
        Ok(out)
    }

    pub fn cycles_per_block(&self) -> usize {
        (self.block / self.period()).round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p() -> DeviceParams {
        DeviceParams::demo()
    }

    #[test]
    fn calibration_hits_reference_step() {
        let p = p();
        let s0 = MemristorState::from_fraction(0.0, &p);
        let s1 = p.apply_pulse(s0, Pulse::new(1.5, 2e-9).unwrap());
        assert_relative_eq!(s1.fraction(&p), 0.1, max_relative = 1e-12);
        let s2 = p.apply_pulse(
            MemristorState::from_fraction(0.5, &p),
            Pulse::new(-1.3, 2e-9).unwrap(),
        );
        assert_relative_eq!(s2.fraction(&p), 0.4, max_relative = 1e-12);
        // (1.5/1.2 - 1)^3 = 1/64 and 0.1 * 50 nm / 2 ns = 2.5 m/s
        assert_relative_eq!(p.k_off, 160.0, max_relative = 1e-12);
        assert_relative_eq!(p.k_on, -2.5 * 1728.0, max_relative = 1e-12);
    }

    #[test]
    fn resistance_examples() {
        let p = p();
        assert_eq!(p.resistance(MemristorState::from_fraction(0.0, &p)), p.r_on);
        assert_eq!(p.resistance(MemristorState::from_fraction(0.0, &p)), 40e3);
        let mc = DeviceParams::montecarlo();
        let r = mc.resistance(MemristorState::from_fraction(0.5, &mc));
        assert_relative_eq!(r, 76.075e6, max_relative = 1e-12);
    }

    #[test]
    fn weight_state_examples() {
        let p = p();
        let w = |f: f64| p.weight_from_state(MemristorState::from_fraction(f, &p));
        assert_eq!(w(0.0), -100.0);
        assert_eq!(w(1.0), 100.0);
        assert_relative_eq!(w(0.75), 50.0, max_relative = 1e-15);

        let frac = |w: f64| p.state_from_weight(w).unwrap().fraction(&p);
        assert_relative_eq!(frac(0.0), 0.5, max_relative = 1e-15);
        assert_eq!(frac(-100.0), 0.0);
        assert_relative_eq!(frac(37.5), 0.6875, max_relative = 1e-15);
        assert!(matches!(
            p.state_from_weight(100.5),
            Err(Error::OutOfRange { .. })
        ));
        assert!(p.state_from_weight(f64::NAN).is_err());
    }

    #[test]
    fn state_rate_examples() {
        let p = p();
        assert_eq!(p.state_rate(0.5), 0.0);
        assert_eq!(p.state_rate(p.v_off), 0.0);
        assert_eq!(p.state_rate(p.v_on), 0.0);
        assert_relative_eq!(p.state_rate(2.0 * p.v_off), p.k_off, max_relative = 1e-15);
        assert!(p.state_rate(2.0 * p.v_on) < 0.0);
    }

    #[test]
    fn apply_pulse_examples() {
        let p = p();
        let s = MemristorState::from_fraction(0.3, &p);
        assert_eq!(p.apply_pulse(s, Pulse::new(0.08, 1.0).unwrap()), s);

        let zero = MemristorState::from_fraction(0.0, &p);
        let dt = 0.5 * p.d / p.k_off;
        let s1 = p.apply_pulse(zero, Pulse::new(2.0 * p.v_off, dt).unwrap());
        assert_relative_eq!(s1.x(), p.k_off * dt, max_relative = 1e-15);

        let sat = p.apply_pulse(zero, Pulse::new(2.0 * p.v_off, 1e3).unwrap());
        assert_eq!(sat.x(), p.d);
    }

    #[test]
    fn read_charge_examples() {
        let p = p();
        let s = MemristorState::from_fraction(0.0, &p);
        assert_eq!(p.read_charge(s, 0.5, 0.0).unwrap(), 0.0);
        let q = p.read_charge(s, 0.5, 100e-6).unwrap();
        assert_relative_eq!(q, 1.25e-9, max_relative = 1e-15);
        let s = MemristorState::from_fraction(0.37, &p);
        let q = p.read_charge(s, 0.5, 100e-6).unwrap();
        assert_relative_eq!(0.5 * 100e-6 / q, p.resistance(s), max_relative = 1e-15);
        assert!(matches!(
            p.read_charge(s, 1.5, 1e-6),
            Err(Error::DestructiveRead { .. })
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        let mut bad = p();
        bad.r_on = bad.r_off;
        assert!(bad.validate().is_err());
        let mut bad = p();
        bad.v_on = 0.3;
        assert!(bad.validate().is_err());
        let mut bad = p();
        bad.k_on = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = p();
        bad.d = 0.0;
        assert!(bad.validate().is_err());
        assert!(Pulse::new(1.0, -1e-9).is_err());
    }

    #[test]
    fn empty_schedule_has_initial_sample_only() {
        let p = p();
        let s = MemristorState::from_fraction(0.2, &p);
        let (end, trace) = run_schedule(s, &[], &p).unwrap();
        assert_eq!(end, s);
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].resistance, p.resistance(s));
    }

    #[test]
    fn overlapping_pulses_rejected() {
        let p = p();
        let s = MemristorState::from_fraction(0.2, &p);
        let pulse = Pulse::new(1.5, 2e-9).unwrap();
        let err = run_schedule(s, &[(0.0, pulse), (1e-9, pulse)], &p).unwrap_err();
        assert!(matches!(err, Error::Schedule(_)));
    }

    #[test]
    fn alternating_schedule_segments() {
        let p = p();
        let sched = AlternatingSchedule::default();
        let pulses = sched.pulses().unwrap();
        assert_eq!(pulses.len(), 2 * 104);
        let (_, trace) = run_schedule(MemristorState::from_fraction(0.0, &p), &pulses, &p).unwrap();
        let block = |lo: f64, hi: f64| {
            trace
                .iter()
                .filter(move |s| s.time > lo * 1e-9 && s.time <= hi * 1e-9 + 1e-15)
                .map(|s| s.resistance)
                .collect::<Vec<_>>()
        };
        assert!(block(0.0, 500.0).iter().all(|&r| r == p.r_on));
        let rise = block(500.0, 1000.0);
        assert!(rise.windows(2).all(|w| w[1] >= w[0]));
        assert!(rise.last().unwrap() > &p.r_on);
    }

    proptest! {
        #[test]
        fn state_stays_bounded(
            start in 0.0f64..=1.0,
            pulses in prop::collection::vec((-3.0f64..3.0, 0.0f64..1e-7), 0..64),
        ) {
            let p = p();
            let mut s = MemristorState::from_fraction(start, &p);
            for (a, w) in pulses {
                s = p.apply_pulse(s, Pulse::new(a, w).unwrap());
                prop_assert!(s.x() >= 0.0 && s.x() <= p.d);
            }
        }

        #[test]
        fn polarity_is_monotone(start in 0.0f64..=1.0, amp in 1.21f64..3.0, w in 0.0f64..1e-8) {
            let p = p();
            let s = MemristorState::from_fraction(start, &p);
            prop_assert!(p.apply_pulse(s, Pulse::new(amp, w).unwrap()).x() >= s.x());
            prop_assert!(p.apply_pulse(s, Pulse::new(-amp, w).unwrap()).x() <= s.x());
        }

        #[test]
        fn sub_threshold_pulses_are_inert(start in 0.0f64..=1.0, amp in -1.2f64..=1.2, w in 0.0f64..1.0) {
            let p = p();
            let s = MemristorState::from_fraction(start, &p);
            prop_assert_eq!(p.apply_pulse(s, Pulse::new(amp, w).unwrap()), s);
        }

        #[test]
        fn displacement_linear_in_width(amp in 1.3f64..2.5, w in 1e-13f64..1e-11) {
            let p = p();
            // start at the lower boundary so the displacement is read without cancellation
            let s = MemristorState::from_fraction(0.0, &p);
            let d1 = p.apply_pulse(s, Pulse::new(amp, w).unwrap()).x();
            let d2 = p.apply_pulse(s, Pulse::new(amp, 2.0 * w).unwrap()).x();
            prop_assert!(d2 < p.d);
            let rel = (d2 - 2.0 * d1).abs() / d2;
            prop_assert!(rel <= 1e-12, "rel = {rel}");
        }

        #[test]
        fn weight_roundtrip(w in -100.0f64..=100.0) {
            let p = p();
            let back = p.weight_from_state(p.state_from_weight(w).unwrap());
            prop_assert!((back - w).abs() <= 1e-12);
        }

        #[test]
        fn weight_to_resistance_is_affine(w1 in -100.0f64..=100.0, w2 in -100.0f64..=100.0) {
            let p = p();
            let r = |w: f64| p.resistance(p.state_from_weight(w).unwrap());
            let slope = (p.r_off - p.r_on) / 200.0;
            prop_assert!((r(w1) - r(w2) - slope * (w1 - w2)).abs() <= 1e-6);
        }
    }
}
