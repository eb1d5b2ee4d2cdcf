//! Noise reduction and gravity / body-acceleration separation.
//!
//! Each wrist stream is median-filtered, then split into a gravity component
//! (low-pass Chebyshev type I, applied zero-phase) and a body-acceleration
//! component defined as the raw signal minus gravity, so the two always
//! reconstruct the input exactly.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::SampleStream;

/// Low-pass design targets for the gravity filter.
///
/// `stop_hz` / `stop_atten_db` are descriptive targets: a 5th-order filter
/// with this ripple and cutoff reaches ≈78 dB at 2 Hz, not 100 dB. Order,
/// ripple and cutoff are the binding parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: u32,
    pub passband_ripple_db: f64,
    pub cutoff_hz: f64,
    pub stop_hz: f64,
    pub stop_atten_db: f64,
    pub sample_rate_hz: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            order: 5,
            passband_ripple_db: 0.001,
            cutoff_hz: 0.25,
            stop_hz: 2.0,
            stop_atten_db: 100.0,
            sample_rate_hz: 40.0,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Parameter("filter order must be >= 1".into()));
        }
        if self.passband_ripple_db <= 0.0 {
            return Err(Error::Parameter("passband ripple must be positive".into()));
        }
        if !(self.cutoff_hz > 0.0
            && self.cutoff_hz < self.stop_hz
            && self.stop_hz < self.sample_rate_hz / 2.0)
        {
            return Err(Error::Parameter(format!(
                "need 0 < cutoff ({}) < stop ({}) < fs/2 ({})",
                self.cutoff_hz,
                self.stop_hz,
                self.sample_rate_hz / 2.0
            )));
        }
        Ok(())
    }

    /// Applies `key=value` overrides from a file (same format as `.meta`).
    pub fn with_overrides_from(path: &Path) -> Result<FilterSpec> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = FilterSpec::default();
        for (idx, raw_line) in content.lines().enumerate() {
            let line = raw_line.trim_end_matches('\r').trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(path, idx + 1, format!("expected key=value, found {line:?}"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let parse_f64 = || -> Result<f64> {
                value.parse().map_err(|_| {
                    Error::parse(path, idx + 1, format!("{key}: not a number: {value:?}"))
                })
            };
            match key {
                "order" => {
                    spec.order = value.parse().map_err(|_| {
                        Error::parse(path, idx + 1, format!("order: not an integer: {value:?}"))
                    })?
                }
                "passband_ripple_db" => spec.passband_ripple_db = parse_f64()?,
                "cutoff_hz" => spec.cutoff_hz = parse_f64()?,
                "stop_hz" => spec.stop_hz = parse_f64()?,
                "stop_atten_db" => spec.stop_atten_db = parse_f64()?,
                "sample_rate_hz" => spec.sample_rate_hz = parse_f64()?,
                _ => {
                    return Err(Error::parse(path, idx + 1, format!("unknown key {key:?}")));
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// One second-order section, denominator normalized to `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// DC gain of the section.
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Both poles strictly inside the unit circle (stability triangle).
    fn is_stable(&self) -> bool {
        let (a1, a2) = (self.a[0], self.a[1]);
        a2.abs() < 1.0 && a1.abs() < 1.0 + a2
    }

    /// Internal state that keeps a constant input `x` at steady state.
    fn steady_state(&self, x: f64) -> [f64; 2] {
        let g = self.dc_gain();
        let s1 = (g - self.b[0]) * x;
        let s2 = (self.b[2] - self.a[1] * g) * x;
        [s1, s2]
    }
}

/// Digital IIR filter in cascaded second-order-section form.
#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    sections: Vec<Biquad>,
    spec: FilterSpec,
}

/// Causal vs forward-backward application of the gravity filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    /// Forward-backward filtering; no group delay (default).
    ZeroPhase,
    /// Single forward pass; output lags the input by the group delay.
    Causal,
}

impl IirFilter {
    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    /// Magnitude response at `f_hz`.
    pub fn magnitude_at(&self, f_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz / self.spec.sample_rate_hz;
        let z1 = Complex::new(w.cos(), -w.sin()); // z^-1
        let z2 = z1 * z1;
        let mut h = Complex::new(1.0, 0.0);
        for s in &self.sections {
            let num = Complex::new(s.b[0], 0.0) + z1 * s.b[1] + z2 * s.b[2];
            let den = Complex::new(1.0, 0.0) + z1 * s.a[0] + z2 * s.a[1];
            h *= num / den;
        }
        h.norm()
    }

    /// Magnitude response in dB at `f_hz`.
    pub fn magnitude_db_at(&self, f_hz: f64) -> f64 {
        20.0 * self.magnitude_at(f_hz).log10()
    }

    /// Single causal pass starting from zero internal state.
    pub fn filter_zero_state(&self, x: &[f64]) -> Vec<f64> {
        self.run(x, |_| [0.0, 0.0])
    }

    /// Single causal pass with the internal state initialized so a constant
    /// input equal to the first sample would pass through unchanged.
    pub fn filter_steady(&self, x: &[f64]) -> Vec<f64> {
        let x0 = x.first().copied().unwrap_or(0.0);
        self.run(x, |sec| sec.steady_state(x0))
    }

    fn run(&self, x: &[f64], init: impl Fn(&Biquad) -> [f64; 2]) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut scale = 1.0;
        for sec in &self.sections {
            // the steady state of section i sees the cascade gain before it
            let mut st = init(sec);
            st[0] *= scale;
            st[1] *= scale;
            let [b0, b1, b2] = sec.b;
            let [a1, a2] = sec.a;
            for v in y.iter_mut() {
                let xin = *v;
                let out = b0 * xin + st[0];
                st[0] = b1 * xin - a1 * out + st[1];
                st[1] = b2 * xin - a2 * out;
                *v = out;
            }
            scale *= sec.dc_gain();
        }
        y
    }

    /// Forward-backward (zero-phase) filtering with odd-reflection padding.
    ///
    /// The pad must be long on the scale of this filter's transient (tens of
    /// seconds at a 0.25 Hz cutoff) or boundary kinks bleed into the output.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let padlen = (n - 1).min(1200);
        let mut ext = Vec::with_capacity(n + 2 * padlen);
        for i in (1..=padlen).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=padlen {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }
        let mut y = self.filter_steady(&ext);
        y.reverse();
        let mut y = self.filter_steady(&y);
        y.reverse();
        y[padlen..padlen + n].to_vec()
    }

    /// Causal impulse response over `n` samples.
    pub fn impulse_response(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        if n > 0 {
            x[0] = 1.0;
        }
        self.filter_zero_state(&x)
    }
}

/// Designs a digital Chebyshev type-I low-pass filter from the spec, via the
/// analog prototype and the bilinear transform with frequency prewarping.
///
/// For odd orders the DC gain is normalized to exactly 1.
pub fn design_cheby1_lowpass(spec: &FilterSpec) -> Result<IirFilter> {
    spec.validate()?;
    let n = spec.order as usize;
    let eps = (10f64.powf(spec.passband_ripple_db / 10.0) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / n as f64;

    // analog prototype poles on the Chebyshev ellipse (cutoff 1 rad/s)
    let mut poles: Vec<Complex<f64>> = (1..=n)
        .map(|k| {
            let theta = PI * (2.0 * k as f64 - 1.0) / (2.0 * n as f64);
            Complex::new(-mu.sinh() * theta.sin(), mu.cosh() * theta.cos())
        })
        .collect();

    // prewarped lowpass-to-lowpass scaling
    let fs2 = 2.0 * spec.sample_rate_hz;
    let warped = fs2 * (PI * spec.cutoff_hz / spec.sample_rate_hz).tan();
    for p in poles.iter_mut() {
        *p *= warped;
    }

    // bilinear transform; all analog zeros at infinity map to z = -1
    let digital: Vec<Complex<f64>> = poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();

    // Every section is normalized to unit DC gain, which keeps intermediate
    // signal levels at the input scale through the whole cascade (the raw
    // digital gain of a narrow low-pass is ~1e-9 and putting it all in one
    // section amplifies state rounding noise in the later high-Q sections).
    // Sections run in order of increasing pole radius so the highest-Q pair
    // filters last.
    let mut sections = Vec::with_capacity(n.div_ceil(2));
    if n % 2 == 1 {
        let p = digital[n / 2];
        let a = [-p.re, 0.0];
        let s = (1.0 + a[0]) / 2.0;
        sections.push(Biquad {
            b: [s, s, 0.0],
            a,
        });
    }
    for k in (0..n / 2).rev() {
        let p = digital[k];
        let a = [-2.0 * p.re, p.norm_sqr()];
        let s = (1.0 + a[0] + a[1]) / 4.0;
        sections.push(Biquad {
            b: [s, 2.0 * s, s],
            a,
        });
    }
    if n % 2 == 0 {
        // even-order Chebyshev I sits at the ripple floor at DC
        let dc = 1.0 / (1.0 + eps * eps).sqrt();
        for b in sections[0].b.iter_mut() {
            *b *= dc;
        }
    }

    let mut filter = IirFilter {
        sections,
        spec: *spec,
    };
    for (i, s) in filter.sections.iter().enumerate() {
        if !s.is_stable() {
            return Err(Error::FilterDesign(format!(
                "section {i} has a pole on or outside the unit circle (a = {:?})",
                s.a
            )));
        }
    }
    if n % 2 == 1 {
        // odd-order Chebyshev I has unit DC gain; squeeze out rounding residue
        let dc: f64 = filter.sections.iter().map(|s| s.dc_gain()).product();
        for b in filter.sections[0].b.iter_mut() {
            *b /= dc;
        }
    }
    Ok(filter)
}

/// Per-axis sliding median with boundary replication; output length equals
/// input length.
pub fn median_filter(stream: &SampleStream, window: usize) -> Result<SampleStream> {
    if window % 2 == 0 || window == 0 {
        return Err(Error::Parameter(format!(
            "median window must be odd and >= 1, got {window}"
        )));
    }
    if stream.is_empty() {
        return Err(Error::Parameter("median filter needs a non-empty stream".into()));
    }
    if window == 1 {
        return Ok(stream.clone());
    }
    let n = stream.len();
    let half = (window / 2) as isize;
    let mut axes: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut buf = Vec::with_capacity(window);
    for (idx, out) in axes.iter_mut().enumerate() {
        let x = stream.axis(idx);
        out.reserve(n);
        for i in 0..n as isize {
            buf.clear();
            for j in (i - half)..=(i + half) {
                let jj = j.clamp(0, n as isize - 1) as usize;
                buf.push(x[jj]);
            }
            buf.sort_by(|p, q| p.partial_cmp(q).unwrap());
            out.push(buf[window / 2]);
        }
    }
    stream.with_axes([&axes[0], &axes[1], &axes[2]])
}

/// Duration below which gravity separation warns about filter transients.
pub const SEPARATION_MIN_DURATION_S: f64 = 10.0;

/// Splits a stream into gravity (low-pass, zero-phase) and body acceleration
/// (raw minus gravity, so `gravity + body` reconstructs the input exactly).
pub fn separate_gravity_body(
    stream: &SampleStream,
    filter: &IirFilter,
) -> Result<(SampleStream, SampleStream)> {
    separate_gravity_body_with(stream, filter, PhaseMode::ZeroPhase)
}

/// Gravity / body separation with an explicit phase mode.
pub fn separate_gravity_body_with(
    stream: &SampleStream,
    filter: &IirFilter,
    mode: PhaseMode,
) -> Result<(SampleStream, SampleStream)> {
    if stream.is_empty() {
        return Err(Error::Parameter("cannot separate an empty stream".into()));
    }
    if stream.duration() < SEPARATION_MIN_DURATION_S {
        log::warn!(
            "stream of {:.2} s is shorter than {} s; gravity estimate may carry edge transients",
            stream.duration(),
            SEPARATION_MIN_DURATION_S
        );
    }
    let mut gravity_axes: [Vec<f64>; 3] = Default::default();
    let mut body_axes: [Vec<f64>; 3] = Default::default();
    for idx in 0..3 {
        let raw = stream.axis(idx);
        let gravity = match mode {
            PhaseMode::ZeroPhase => filter.filtfilt(&raw),
            PhaseMode::Causal => filter.filter_steady(&raw),
        };
        let body = raw
            .iter()
            .zip(gravity.iter())
            .map(|(r, g)| r - g)
            .collect();
        gravity_axes[idx] = gravity;
        body_axes[idx] = body;
    }
    let gravity = stream.with_axes([&gravity_axes[0], &gravity_axes[1], &gravity_axes[2]])?;
    let body = stream.with_axes([&body_axes[0], &body_axes[1], &body_axes[2]])?;
    Ok((gravity, body))
}
