//! Crossbar tiles: how many are needed, how they generate streams, and what
//! they cost in area and power.
//!
//! A stream of `n_bit` bits is striped across `ceil(n_bit / cols)` tiles with
//! one active row per tile, so the whole stream is available after a single
//! row read per tile. Each stream (gradient and weight) gets its own tiles,
//! and the whole set is doubled so that half the tiles reset while the other
//! half generate. Sense amplifiers share a reference between adjacent
//! columns, splitting every readout into two phases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::device::{pulse_width_for, sample_switch_cell, DeviceParams};
use crate::error::{contract, Error, Result};
use crate::rng::{Label, RngState, Role};
use crate::sc::{BitStream, Priori};

const UM2_PER_MM2: f64 = 1e6;

/// Geometry, area and power constants of one tile and its periphery.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileConfig {
    pub rows: usize,
    pub cols: usize,
    /// Area of one tile, µm².
    pub tile_area_um2: f64,
    /// Cell pitch, nm.
    pub pitch_nm: f64,
    /// Static power of a device in the on state, W.
    pub p_on_w: f64,
    /// Static power of a device in the off state, W.
    pub p_off_w: f64,
    /// One XNOR gate, µm² (670 nm × 355 nm).
    pub xnor_area_each_um2: f64,
    /// All XNOR gates, pitch-matched under the arrays, mm².
    pub xnor_area_mm2: f64,
    /// MUX scaled adder plus register, mm².
    pub adder_register_area_mm2: f64,
    /// One cross-coupled sense amplifier, µm².
    pub sense_amp_area_each_um2: f64,
    /// All sense amplifiers with pairwise column sharing, mm².
    pub sense_amp_area_mm2: f64,
    /// Post-layout delay of the XNOR + MUX MAC, ps.
    pub mac_delay_ps: f64,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self {
            rows: 128,
            cols: 128,
            tile_area_um2: 2.77e3,
            pitch_nm: 410.0,
            p_on_w: 45e-9,
            p_off_w: 0.45e-9,
            xnor_area_each_um2: 0.670 * 0.355,
            xnor_area_mm2: 0.031,
            adder_register_area_mm2: 0.0735,
            sense_amp_area_each_um2: 0.41,
            sense_amp_area_mm2: 0.0267,
            mac_delay_ps: 58.0,
        }
    }
}

impl TileConfig {
    pub fn bits_per_tile(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(contract("tile rows and cols must be positive"));
        }
        let positive = [
            self.tile_area_um2,
            self.pitch_nm,
            self.p_on_w,
            self.p_off_w,
            self.xnor_area_each_um2,
            self.xnor_area_mm2,
            self.adder_register_area_mm2,
            self.sense_amp_area_each_um2,
            self.sense_amp_area_mm2,
            self.mac_delay_ps,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(contract("tile areas, powers and delays must be positive"));
        }
        Ok(())
    }

    /// Reads `tile.*` keys over the defaults.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let t = Self {
            rows: cfg.get_or("tile.rows", d.rows)?,
            cols: cfg.get_or("tile.cols", d.cols)?,
            tile_area_um2: cfg.get_or("tile.area_um2", d.tile_area_um2)?,
            pitch_nm: cfg.get_or("tile.pitch_nm", d.pitch_nm)?,
            p_on_w: cfg.get_or("tile.p_on_w", d.p_on_w)?,
            p_off_w: cfg.get_or("tile.p_off_w", d.p_off_w)?,
            xnor_area_each_um2: cfg.get_or("tile.xnor_area_each_um2", d.xnor_area_each_um2)?,
            xnor_area_mm2: cfg.get_or("tile.xnor_area_mm2", d.xnor_area_mm2)?,
            adder_register_area_mm2: cfg
                .get_or("tile.adder_register_area_mm2", d.adder_register_area_mm2)?,
            sense_amp_area_each_um2: cfg
                .get_or("tile.sense_amp_area_each_um2", d.sense_amp_area_each_um2)?,
            sense_amp_area_mm2: cfg.get_or("tile.sense_amp_area_mm2", d.sense_amp_area_mm2)?,
            mac_delay_ps: cfg.get_or("tile.mac_delay_ps", d.mac_delay_ps)?,
        };
        t.validate()?;
        Ok(t)
    }
}

/// Tile allocation for a bit-stream configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ArrayPlan {
    pub n_bit: usize,
    /// Streams held in arrays; gradient and weight by default.
    pub n_streams: usize,
    pub tiles_per_stream: usize,
    /// Generate/reset duplication.
    pub pingpong_factor: usize,
    pub total_tiles: usize,
    /// Readout phases imposed by sense-amplifier column sharing.
    pub time_mux_steps: usize,
}

pub const PINGPONG_FACTOR: usize = 2;
pub const TIME_MUX_STEPS: usize = 2;
pub const DEFAULT_STREAMS: usize = 2;

pub fn plan_array(n_bit: usize, n_streams: usize, tile: &TileConfig) -> Result<ArrayPlan> {
    if n_bit == 0 || n_streams == 0 {
        return Err(contract(format!(
            "plan needs n_bit >= 1 and n_streams >= 1 (got {n_bit}, {n_streams})"
        )));
    }
    tile.validate()?;
    let tiles_per_stream = n_bit.div_ceil(tile.cols);
    Ok(ArrayPlan {
        n_bit,
        n_streams,
        tiles_per_stream,
        pingpong_factor: PINGPONG_FACTOR,
        total_tiles: PINGPONG_FACTOR * n_streams * tiles_per_stream,
        time_mux_steps: TIME_MUX_STEPS,
    })
}

/// Bookkeeping from one in-array stream generation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerationStats {
    /// Cells that switched on.
    pub on_count: u64,
    /// Readout phases per tile.
    pub phases: usize,
    pub tiles_used: usize,
    /// Rows read per tile.
    pub rows_per_tile: usize,
    pub pulse_width_s: f64,
    /// Phases times pulse width.
    pub readout_latency_s: f64,
}

/// Program `n_bit` cells for switching probability `target_p` and read them
/// back, one row per tile, even columns first then odd columns.
///
/// Each tile draws from its own substream derived from `rng`.
pub fn generate_stream(
    target_p: f64,
    n_bit: usize,
    device: &DeviceParams,
    tile: &TileConfig,
    rng: &mut RngState,
) -> Result<(BitStream, GenerationStats)> {
    if target_p >= 1.0 {
        return Err(Error::UnreachableProbability(target_p));
    }
    let t = pulse_width_for(target_p, device.v_prog, device)?;
    tile.validate()?;
    let mut stream = BitStream::zeros(n_bit, Priori::Bipolar)?;
    let tiles = n_bit.div_ceil(tile.cols);
    let root: u64 = rng.random();
    for ti in 0..tiles {
        let mut cell_rng = RngState::new(root, Label::new(0, ti as u64, Role::Device, 0));
        let base = ti * tile.cols;
        let width = (n_bit - base).min(tile.cols);
        for phase in 0..TIME_MUX_STEPS {
            for col in (phase..width).step_by(TIME_MUX_STEPS) {
                if sample_switch_cell(t, device.v_prog, device, &mut cell_rng)? {
                    stream.set_bit(base + col, true);
                }
            }
        }
    }
    let stats = GenerationStats {
        on_count: stream.popcount(),
        phases: TIME_MUX_STEPS,
        tiles_used: tiles,
        rows_per_tile: 1,
        pulse_width_s: t,
        readout_latency_s: TIME_MUX_STEPS as f64 * t,
    };
    Ok((stream, stats))
}

/// Area breakdown, mm².
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AreaReport {
    pub rram_area_mm2: f64,
    pub xnor_area_mm2: f64,
    pub adder_register_area_mm2: f64,
    pub sense_amp_area_mm2: f64,
    pub total_area_mm2: f64,
}

pub fn area_report(plan: &ArrayPlan, tile: &TileConfig) -> AreaReport {
    let rram = plan.total_tiles as f64 * tile.tile_area_um2 / UM2_PER_MM2;
    AreaReport {
        rram_area_mm2: rram,
        xnor_area_mm2: tile.xnor_area_mm2,
        adder_register_area_mm2: tile.adder_register_area_mm2,
        sense_amp_area_mm2: tile.sense_amp_area_mm2,
        total_area_mm2: rram
            + tile.xnor_area_mm2
            + tile.adder_register_area_mm2
            + tile.sense_amp_area_mm2,
    }
}

/// Full area and power estimate.
///
/// `*_raw_w` fields are the literal readout power
/// `n_bit * (p_on * E + p_off * (1 - E))`; the reported stream powers are
/// those scaled by `calibration_kappa`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub n_bit: usize,
    pub n_streams: usize,
    pub total_tiles: usize,
    pub rram_area_mm2: f64,
    pub xnor_area_mm2: f64,
    pub adder_register_area_mm2: f64,
    pub sense_amp_area_mm2: f64,
    pub total_area_mm2: f64,
    pub p_read_gradient_w: f64,
    pub p_read_weight_w: f64,
    pub p_read_gradient_raw_w: f64,
    pub p_read_weight_raw_w: f64,
    pub total_power_w: f64,
    pub static_power_cap_w: f64,
    pub e_grad_stat: f64,
    pub e_weight_stat: f64,
    pub calibration_kappa: f64,
}

pub const DEFAULT_KAPPA: f64 = 0.108;
/// Mean on-probability of normalized bipolar weights.
pub const DEFAULT_E_WEIGHT: f64 = 0.5;

/// Power dissipated by one readout of an `n_bit` stream whose cells are on
/// with probability `e`.
pub fn readout_power(n_bit: usize, e: f64, tile: &TileConfig) -> f64 {
    n_bit as f64 * (tile.p_on_w * e + tile.p_off_w * (1.0 - e))
}

pub fn power_report(
    plan: &ArrayPlan,
    e_grad: f64,
    e_weight: f64,
    tile: &TileConfig,
    kappa: f64,
) -> Result<CostReport> {
    for e in [e_grad, e_weight] {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::Range {
                value: e,
                lo: 0.0,
                hi: 1.0,
            });
        }
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(contract(format!("kappa must be positive, got {kappa}")));
    }
    let area = area_report(plan, tile);
    let grad_raw = readout_power(plan.n_bit, e_grad, tile);
    let weight_raw = readout_power(plan.n_bit, e_weight, tile);
    let grad = kappa * grad_raw;
    let weight = kappa * weight_raw;
    let total = PINGPONG_FACTOR as f64 * (grad + weight);
    Ok(CostReport {
        n_bit: plan.n_bit,
        n_streams: plan.n_streams,
        total_tiles: plan.total_tiles,
        rram_area_mm2: area.rram_area_mm2,
        xnor_area_mm2: area.xnor_area_mm2,
        adder_register_area_mm2: area.adder_register_area_mm2,
        sense_amp_area_mm2: area.sense_amp_area_mm2,
        total_area_mm2: area.total_area_mm2,
        p_read_gradient_w: grad,
        p_read_weight_w: weight,
        p_read_gradient_raw_w: grad_raw,
        p_read_weight_raw_w: weight_raw,
        total_power_w: total,
        static_power_cap_w: total / TIME_MUX_STEPS as f64,
        e_grad_stat: e_grad,
        e_weight_stat: e_weight,
        calibration_kappa: kappa,
    })
}

/// XNOR + MUX multiply-accumulate against a 16-bit binary MAC.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MacComparison {
    pub sc_gate_count: u32,
    pub sc_delay_ps: f64,
    pub sc_datapath_area_mm2: f64,
    pub binary_mac_bits: u32,
    /// Binary MAC area over XNOR + MUX area (order of magnitude).
    pub area_ratio: f64,
    /// Binary MAC delay over XNOR + MUX delay (order of magnitude).
    pub delay_ratio: f64,
}

pub fn mac_comparison(tile: &TileConfig) -> MacComparison {
    MacComparison {
        sc_gate_count: 2,
        sc_delay_ps: tile.mac_delay_ps,
        sc_datapath_area_mm2: tile.xnor_area_mm2,
        binary_mac_bits: 16,
        area_ratio: 1e5,
        delay_ratio: 1e2,
    }
}
