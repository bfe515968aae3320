//! n×m memristor crossbar with pulse-width encoded inputs and charge readout.
//!
//! Cell `(i, j)` sits at row `i` (input line) and column `j` (output line).
//! An input magnitude `c_i` is encoded as a read pulse of width `t0 * c_i`; the
//! charge collected through cell `(i, j)` is `v_read * t_i / R_ij`.
//!
//! Two parameter sets coexist. Every cell carries its *physical* parameters,
//! which decide how the state moves and what resistance it shows. The
//! controller only knows the *nominal* parameters and uses them to turn charge
//! back into weights and weights into write pulse widths. With no device
//! variation the two coincide and the array is an exact multiply-accumulate
//! engine.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::device::{check_weight, DeviceParams, MemristorState, Pulse, WEIGHT_LIMIT};
use crate::error::{Error, Result};

/// Relative state gap (fraction of `d`) below which `program_weight` skips the write.
const PROGRAM_DEADBAND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossbarConfig {
    pub v_read: f64,
    pub v_write_pos: f64,
    pub v_write_neg: f64,
    /// Seconds of read pulse per unit of input magnitude.
    pub t0: f64,
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        CrossbarConfig {
            v_read: 0.5,
            v_write_pos: 2.0,
            v_write_neg: -2.0,
            t0: 100e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    state: MemristorState,
    params: DeviceParams,
}

#[derive(Debug, Clone)]
pub struct Crossbar {
    rows: usize,
    cols: usize,
    nominal: DeviceParams,
    config: CrossbarConfig,
    cells: Vec<Cell>,
    write_pulses: u64,
}

impl Crossbar {
    /// Array of identical nominal devices, all at `x / d = 0.5` (weight 0).
    pub fn new(
        rows: usize,
        cols: usize,
        nominal: DeviceParams,
        config: CrossbarConfig,
    ) -> Result<Self> {
        Self::with_cell_params(rows, cols, nominal, config, |_, _| nominal)
    }

    /// Array whose cell `(i, j)` has physical parameters `params(i, j)`.
    pub fn with_cell_params(
        rows: usize,
        cols: usize,
        nominal: DeviceParams,
        config: CrossbarConfig,
        mut params: impl FnMut(usize, usize) -> DeviceParams,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dims("positive crossbar dimensions", format!("{rows}x{cols}")));
        }
        nominal.validate()?;
        check_voltages(&nominal, &config)?;
        let mut cells = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let p = params(i, j);
                p.validate()?;
                check_voltages(&p, &config)?;
                cells.push(Cell {
                    state: MemristorState::from_fraction(0.5, &p),
                    params: p,
                });
            }
        }
        Ok(Crossbar {
            rows,
            cols,
            nominal,
            config,
            cells,
            write_pulses: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn config(&self) -> &CrossbarConfig {
        &self.config
    }

    pub fn nominal(&self) -> &DeviceParams {
        &self.nominal
    }

    /// Super-threshold pulses applied so far; each one drove exactly one cell.
    pub fn write_pulse_count(&self) -> u64 {
        self.write_pulses
    }

    fn cell(&self, i: usize, j: usize) -> Result<&Cell> {
        if i >= self.rows || j >= self.cols {
            return Err(Error::IndexOutOfBounds {
                row: i,
                col: j,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(&self.cells[i * self.cols + j])
    }

    pub fn cell_state(&self, i: usize, j: usize) -> Result<MemristorState> {
        Ok(self.cell(i, j)?.state)
    }

    pub fn cell_params(&self, i: usize, j: usize) -> Result<DeviceParams> {
        Ok(self.cell(i, j)?.params)
    }

    pub fn cell_resistance(&self, i: usize, j: usize) -> Result<f64> {
        let c = self.cell(i, j)?;
        Ok(c.params.resistance(c.state))
    }

    pub fn pulse_width_for_input(&self, c: f64) -> Result<f64> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::OutOfRange {
                what: "input magnitude",
                value: c,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        Ok(self.config.t0 * c)
    }

    /// Charge through the single cell `(i, j)` when only row `i` is pulsed.
    pub fn cell_charge(&self, i: usize, j: usize, c: f64) -> Result<f64> {
        let t = self.pulse_width_for_input(c)?;
        let cell = self.cell(i, j)?;
        cell.params.read_charge(cell.state, self.config.v_read, t)
    }

    /// Column charge with every row pulsed at once: `sum_i v t_i / R_ij`.
    pub fn column_charge(&self, j: usize, c: &[f64]) -> Result<f64> {
        self.check_input(c)?;
        c.iter()
            .enumerate()
            .map(|(i, &ci)| self.cell_charge(i, j, ci))
            .sum()
    }

    /// Weight the controller infers from a charge `q` collected over `t` seconds.
    fn decode_weight(&self, q: f64, t: f64) -> f64 {
        let r = self.config.v_read * t / q;
        let n = &self.nominal;
        WEIGHT_LIMIT * (2.0 * (r - n.r_on) / (n.r_off - n.r_on) - 1.0)
    }

    /// `y_j = sum_i w_ij c_i` with each `w_ij` recovered from its own cell charge.
    pub fn read_output(&self, j: usize, c: &[f64]) -> Result<f64> {
        self.check_input(c)?;
        let mut y = 0.0;
        for (i, &ci) in c.iter().enumerate() {
            let q = self.cell_charge(i, j, ci)?;
            if ci == 0.0 {
                // zero-width pulse contributes nothing
                continue;
            }
            let t = self.config.t0 * ci;
            y += self.decode_weight(q, t) * ci;
        }
        Ok(y)
    }

    pub fn read_outputs(&self, c: &[f64]) -> Result<Vec<f64>> {
        (0..self.cols).map(|j| self.read_output(j, c)).collect()
    }

    fn check_input(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.rows {
            return Err(Error::dims(
                format!("input of length {}", self.rows),
                format!("length {}", c.len()),
            ));
        }
        Ok(())
    }

    /// Weight of cell `(i, j)` as sensed by a unit-input read.
    pub fn read_weight(&self, i: usize, j: usize) -> Result<f64> {
        let q = self.cell_charge(i, j, 1.0)?;
        Ok(self.decode_weight(q, self.config.t0))
    }

    pub fn read_weights(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.rows, self.cols), |(i, j)| {
            self.read_weight(i, j).expect("indices in range")
        })
    }

    /// Drives cell `(i, j)` to `target` with a single write pulse.
    ///
    /// The current state is sensed with a read, the pulse polarity and width
    /// come from inverting the rate equation with nominal parameters. Returns
    /// the pulse applied, or `None` when the cell is already at the target.
    pub fn program_weight(&mut self, i: usize, j: usize, target: f64) -> Result<Option<Pulse>> {
        check_weight(target)?;
        let n = self.nominal;
        let sensed = (self.read_weight(i, j)? / WEIGHT_LIMIT + 1.0) / 2.0 * n.d;
        let goal = n.state_from_weight(target)?.x();
        let gap = goal - sensed;
        if gap.abs() <= PROGRAM_DEADBAND * n.d {
            return Ok(None);
        }
        let v = if gap > 0.0 {
            self.config.v_write_pos
        } else {
            self.config.v_write_neg
        };
        let pulse = Pulse::new(v, gap.abs() / n.state_rate(v).abs())?;
        self.apply_write(i, j, pulse)?;
        Ok(Some(pulse))
    }

    // The only path that applies a super-threshold voltage: one cell per pulse.
    fn apply_write(&mut self, i: usize, j: usize, pulse: Pulse) -> Result<()> {
        self.cell(i, j)?;
        let cell = &mut self.cells[i * self.cols + j];
        cell.state = cell.params.apply_pulse(cell.state, pulse);
        self.write_pulses += 1;
        Ok(())
    }

    /// Programs every cell, one at a time, row-major.
    pub fn write_weights(&mut self, w: &Array2<f64>) -> Result<()> {
        if w.dim() != (self.rows, self.cols) {
            return Err(Error::dims(
                format!("{}x{} weights", self.rows, self.cols),
                format!("{}x{}", w.nrows(), w.ncols()),
            ));
        }
        if let Some(&bad) = w.iter().find(|v| !(-WEIGHT_LIMIT..=WEIGHT_LIMIT).contains(*v)) {
            check_weight(bad)?;
        }
        for ((i, j), &target) in w.indexed_iter() {
            self.program_weight(i, j, target)?;
        }
        Ok(())
    }

    /// Rows of `(row, col, weight, resistance_ohm)` for every cell.
    pub fn weight_table(&self) -> Vec<(usize, usize, f64, f64)> {
        let w = self.read_weights();
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let r = self.cell_resistance(i, j).expect("indices in range");
                out.push((i, j, w[[i, j]], r));
            }
        }
        out
    }
}

fn check_voltages(p: &DeviceParams, cfg: &CrossbarConfig) -> Result<()> {
    if !(cfg.v_read.abs() < p.read_margin()) {
        return Err(Error::InvalidParams(format!(
            "read voltage {} V is not below the thresholds {} / {} V",
            cfg.v_read, p.v_on, p.v_off
        )));
    }
    if !(cfg.v_write_pos > p.v_off && cfg.v_write_neg < p.v_on) {
        return Err(Error::InvalidParams(format!(
            "write voltages {} / {} V do not exceed thresholds {} / {} V",
            cfg.v_write_pos, cfg.v_write_neg, p.v_off, p.v_on
        )));
    }
    if !(cfg.t0 > 0.0 && cfg.t0.is_finite()) {
        return Err(Error::InvalidParams(format!("t0 = {} must be positive", cfg.t0)));
    }
    Ok(())
}
