//! Deterministic generator of synthetic bimanual-gesture datasets and
//! scripted continuous scenarios.
//!
//! Templates are analytic (unit-norm gravity orientation paths plus
//! raised-cosine body bumps and windowed oscillations), so every generated
//! signal has a closed-form ground truth. Five builtin templates mirror the
//! trait matrix of the modelled household gestures: an alternating-hand
//! recursive pull (occ), a concurrent three-stroke sweep (swp), a sequential
//! two-hand pour (fcot), a three-phase fetch (rff) and a concurrent
//! mirror-symmetric swing (wo).

use std::f64::consts::PI;
use std::fs;

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gauss::derive_seed;
use crate::signal::{Side, NOMINAL_RATE_HZ};

/// Gravity magnitude used by every template, m/s².
pub const GRAVITY: f64 = 9.81;

/// Rest segments carry gravity plus this amplitude of noise, m/s².
pub const REST_NOISE_SIGMA: f64 = 0.05;

/// Fixed rest pad before the gesture onset inside each dataset trial; the
/// `.meta` offsets point at it so synchronization is exercised end to end.
pub const LEAD_REST_S: f64 = 0.5;

const TAIL_REST_S: f64 = 0.25;

/// Behavioural traits of a gesture template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GestureTraits {
    /// Composed of repetitions of a simpler stroke.
    pub recursive: bool,
    /// Both hands move at the same time (vs in sequence).
    pub concurrent: bool,
    /// The two hands are coupled through a physical tool.
    pub tool_constrained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TemplateKind {
    Occ,
    Swp,
    Fcot,
    Rff,
    Wo,
}

/// Analytic per-wrist gravity and body trajectories of one gesture.
#[derive(Debug, Clone)]
pub struct GestureTemplate {
    pub name: String,
    /// Nominal duration, seconds.
    pub duration: f64,
    pub traits: GestureTraits,
    kind: TemplateKind,
}

/// Smooth 0→1→0 envelope over [0, span].
fn env(t: f64, span: f64) -> f64 {
    if t <= 0.0 || t >= span {
        0.0
    } else {
        let s = (PI * t / span).sin();
        s * s
    }
}

/// Raised-cosine bump centered at `c` with full width `w`.
fn bump(t: f64, c: f64, w: f64) -> f64 {
    let u = (t - c) / w;
    if u.abs() >= 0.5 {
        0.0
    } else {
        let v = (PI * u).cos();
        v * v
    }
}

/// Gravity vector from tilt `theta` (from vertical) and azimuth `phi`;
/// magnitude is exactly [`GRAVITY`].
fn gravity_from_angles(theta: f64, phi: f64) -> [f64; 3] {
    [
        GRAVITY * theta.sin() * phi.cos(),
        GRAVITY * theta.sin() * phi.sin(),
        GRAVITY * theta.cos(),
    ]
}

impl GestureTemplate {
    /// Gravity trajectory at gesture-local time `tau` (clamped to the
    /// duration); starts and ends at the neutral flat orientation.
    pub fn gravity(&self, side: Side, tau: f64) -> [f64; 3] {
        let t = tau.clamp(0.0, self.duration);
        let dur = self.duration;
        let e = env(t, dur);
        let (theta, phi) = match (self.kind, side) {
            (TemplateKind::Occ, Side::Left) => (0.35 * e, 0.5),
            (TemplateKind::Occ, Side::Right) => (0.35 * e * e, 2.1),
            (TemplateKind::Swp, Side::Left) => (0.30 * e, -1.0),
            (TemplateKind::Swp, Side::Right) => (0.30 * e, -0.6),
            (TemplateKind::Fcot, Side::Left) => (0.60 * bump(t, 0.5 * dur, 0.6 * dur), 1.8),
            (TemplateKind::Fcot, Side::Right) => (0.25 * e, 0.3),
            (TemplateKind::Rff, Side::Left) => (0.50 * bump(t, 0.5 * dur, 0.4 * dur), 1.2),
            (TemplateKind::Rff, Side::Right) => (
                0.40 * (bump(t, dur / 6.0, dur / 3.0) + bump(t, 5.0 * dur / 6.0, dur / 3.0)),
                -2.0,
            ),
            (TemplateKind::Wo, Side::Left) => (0.45 * e, PI - 0.9),
            (TemplateKind::Wo, Side::Right) => (0.45 * e, 0.9),
        };
        gravity_from_angles(theta, phi)
    }

    /// Body-acceleration trajectory at gesture-local time `tau`; zero outside
    /// the active span and at both ends.
    pub fn body(&self, side: Side, tau: f64) -> [f64; 3] {
        if tau < 0.0 || tau > self.duration {
            return [0.0, 0.0, 0.0];
        }
        let t = tau;
        let dur = self.duration;
        match self.kind {
            TemplateKind::Occ => {
                // alternated up-and-down pulls: hands in antiphase
                let cycles = 5.0;
                let osc = (2.0 * PI * cycles * t / dur).sin();
                let e = env(t, dur);
                let sign = if side == Side::Left { 1.0 } else { -1.0 };
                [0.6 * sign * osc * e, 0.0, 3.0 * sign * osc * e]
            }
            TemplateKind::Swp => {
                // three identical strokes; both hands move concurrently
                let period = dur / 3.0;
                let u = t - period * (t / period).floor();
                let w = env(u, period);
                let stroke_x = 3.2 * (2.0 * PI * u / period).sin() * w;
                let stroke_y = 1.2 * (4.0 * PI * u / period).sin() * w;
                [stroke_x, stroke_y, 0.5 * stroke_x.abs() * w]
            }
            TemplateKind::Fcot => match side {
                // left rotates the tap handle, right lifts and holds the cup
                Side::Left => [
                    1.6 * bump(t, 0.28 * dur, 0.25 * dur) - 1.6 * bump(t, 0.78 * dur, 0.25 * dur),
                    2.2 * bump(t, 0.5 * dur, 0.45 * dur),
                    0.0,
                ],
                Side::Right => [
                    0.0,
                    0.8 * bump(t, 0.15 * dur, 0.2 * dur),
                    2.6 * bump(t, 0.15 * dur, 0.2 * dur) - 2.6 * bump(t, 0.85 * dur, 0.2 * dur),
                ],
            },
            TemplateKind::Rff => match side {
                // phase 2: left reaches in and lifts the bottle
                Side::Left => [
                    1.0 * bump(t, 0.5 * dur, 0.22 * dur),
                    1.5 * bump(t, 0.55 * dur, 0.2 * dur),
                    2.4 * bump(t, 0.5 * dur, 0.25 * dur),
                ],
                // phases 1 and 3: right opens then closes the door
                Side::Right => [
                    3.0 * bump(t, dur / 6.0, 0.25 * dur) - 3.0 * bump(t, 5.0 * dur / 6.0, 0.25 * dur),
                    1.0 * bump(t, dur / 6.0, 0.3 * dur) + 1.0 * bump(t, 5.0 * dur / 6.0, 0.3 * dur),
                    0.0,
                ],
            },
            TemplateKind::Wo => {
                // one concurrent swing; the left hand mirrors the right in x
                let right = [
                    3.4 * bump(t, 0.4 * dur, 0.5 * dur),
                    1.5 * bump(t, 0.55 * dur, 0.5 * dur),
                    0.9 * bump(t, 0.3 * dur, 0.35 * dur),
                ];
                match side {
                    Side::Right => right,
                    Side::Left => [-right[0], right[1], right[2]],
                }
            }
        }
    }
}

/// The five builtin gesture templates.
pub fn builtin_templates() -> Vec<GestureTemplate> {
    vec![
        GestureTemplate {
            name: "occ".into(),
            duration: 4.0,
            traits: GestureTraits {
                recursive: true,
                concurrent: false,
                tool_constrained: true,
            },
            kind: TemplateKind::Occ,
        },
        GestureTemplate {
            name: "swp".into(),
            duration: 4.5,
            traits: GestureTraits {
                recursive: true,
                concurrent: true,
                tool_constrained: true,
            },
            kind: TemplateKind::Swp,
        },
        GestureTemplate {
            name: "fcot".into(),
            duration: 5.0,
            traits: GestureTraits {
                recursive: false,
                concurrent: false,
                tool_constrained: false,
            },
            kind: TemplateKind::Fcot,
        },
        GestureTemplate {
            name: "rff".into(),
            duration: 6.0,
            traits: GestureTraits {
                recursive: false,
                concurrent: false,
                tool_constrained: false,
            },
            kind: TemplateKind::Rff,
        },
        GestureTemplate {
            name: "wo".into(),
            duration: 3.5,
            traits: GestureTraits {
                recursive: false,
                concurrent: true,
                tool_constrained: true,
            },
            kind: TemplateKind::Wo,
        },
    ]
}

/// Per-trial variability applied by the generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterSpec {
    /// Per-axis amplitude noise, m/s².
    pub amplitude_sigma: f64,
    /// Uniform execution-speed factor range (min, max).
    pub speed_range: (f64, f64),
    /// Maximum inter-hand phase shift, seconds.
    pub phase_jitter_s: f64,
}

impl JitterSpec {
    pub fn none() -> Self {
        JitterSpec {
            amplitude_sigma: 0.0,
            speed_range: (1.0, 1.0),
            phase_jitter_s: 0.0,
        }
    }

    pub fn moderate() -> Self {
        JitterSpec {
            amplitude_sigma: 0.25,
            speed_range: (0.9, 1.1),
            phase_jitter_s: 0.08,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.speed_range.0 <= 0.0 || self.speed_range.1 < self.speed_range.0 {
            return Err(Error::Parameter(format!(
                "speed range {:?} must be positive and ordered",
                self.speed_range
            )));
        }
        if self.amplitude_sigma < 0.0 || self.phase_jitter_s < 0.0 {
            return Err(Error::Parameter("jitter amounts must be non-negative".into()));
        }
        Ok(())
    }

    fn draw_speed(&self, rng: &mut ChaCha8Rng) -> f64 {
        let (lo, hi) = self.speed_range;
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    }

    fn draw_phase(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.phase_jitter_s > 0.0 {
            rng.random_range(-self.phase_jitter_s..self.phase_jitter_s)
        } else {
            0.0
        }
    }
}

/// One synthesized trial as raw per-wrist rows, ready to be written.
#[derive(Debug, Clone)]
pub struct SynthTrial {
    pub label: String,
    pub left: Vec<(f64, [f64; 3])>,
    pub right: Vec<(f64, [f64; 3])>,
    pub offset_left: f64,
    pub offset_right: f64,
}

fn synth_trial(template: &GestureTemplate, jitter: &JitterSpec, rng: &mut ChaCha8Rng) -> SynthTrial {
    let speed = jitter.draw_speed(rng);
    let phase = jitter.draw_phase(rng);
    let active = template.duration / speed;
    let total = LEAD_REST_S + active + TAIL_REST_S;
    let n = (total * NOMINAL_RATE_HZ).floor() as usize + 1;
    let noise = Normal::new(0.0, jitter.amplitude_sigma.max(1e-300)).unwrap();

    let mut sides = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for (slot, side) in [(0usize, Side::Left), (1, Side::Right)] {
        let onset = match side {
            Side::Left => LEAD_REST_S,
            Side::Right => LEAD_REST_S + phase,
        };
        for i in 0..n {
            let t = i as f64 / NOMINAL_RATE_HZ;
            let tau = (t - onset) * speed;
            let g = template.gravity(side, tau);
            let b = template.body(side, tau);
            let mut a = [g[0] + b[0], g[1] + b[1], g[2] + b[2]];
            if jitter.amplitude_sigma > 0.0 {
                for v in a.iter_mut() {
                    *v += noise.sample(rng);
                }
            }
            sides[slot].push((t, a));
        }
    }
    let [left, right] = sides;
    SynthTrial {
        label: template.name.clone(),
        left,
        right,
        offset_left: LEAD_REST_S,
        offset_right: LEAD_REST_S,
    }
}

fn write_csv(path: &Path, rows: &[(f64, [f64; 3])]) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 40 + 16);
    out.push_str("t,ax,ay,az\n");
    for (t, a) in rows {
        out.push_str(&format!("{},{},{},{}\n", t, a[0], a[1], a[2]));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Generates `trials_per_gesture` recordings per template into `out_dir`
/// (CSV pairs plus `.meta` sidecars); byte-identical for a fixed seed.
pub fn generate_dataset(
    templates: &[GestureTemplate],
    trials_per_gesture: usize,
    jitter: &JitterSpec,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    jitter.validate()?;
    if trials_per_gesture == 0 {
        return Err(Error::Parameter("trials_per_gesture must be >= 1".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = Vec::new();
    for template in templates {
        for idx in 0..trials_per_gesture {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                &format!("trial-{}-{idx}", template.name),
            ));
            let trial = synth_trial(template, jitter, &mut rng);
            let stem = format!("{}_{idx:03}", template.name);
            let left_path = out_dir.join(format!("{stem}_left.csv"));
            let right_path = out_dir.join(format!("{stem}_right.csv"));
            let meta_path = out_dir.join(format!("{stem}.meta"));
            write_csv(&left_path, &trial.left)?;
            write_csv(&right_path, &trial.right)?;
            let meta = format!(
                "label={}\noffset_left={}\noffset_right={}\n",
                trial.label, trial.offset_left, trial.offset_right
            );
            fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
            manifest.push(left_path);
            manifest.push(right_path);
            manifest.push(meta_path);
        }
    }
    Ok(manifest)
}

/// One scripted gesture occurrence preceded by a rest gap.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEntry {
    pub gesture: String,
    pub rest_before_s: f64,
}

/// Ordered script of a continuous recording.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScript {
    pub entries: Vec<ScenarioEntry>,
    pub trailing_rest_s: f64,
}

/// The scripted real-life analogues: 1 = the same sweep twice, 2 = one pass
/// over the four remaining gestures.
pub fn builtin_scenario(number: u32) -> Result<ScenarioScript> {
    let gestures: Vec<&str> = match number {
        1 => vec!["swp", "swp"],
        2 => vec!["wo", "rff", "fcot", "occ"],
        other => {
            return Err(Error::Parameter(format!(
                "unknown scenario #{other}, expected 1 or 2"
            )))
        }
    };
    Ok(ScenarioScript {
        entries: gestures
            .into_iter()
            .map(|g| ScenarioEntry {
                gesture: g.into(),
                rest_before_s: 5.0,
            })
            .collect(),
        trailing_rest_s: 5.0,
    })
}

/// Ground-truth annotation of one scripted occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTruth {
    pub t_start: f64,
    pub t_end: f64,
    pub label: String,
}

/// A generated continuous recording with its ground truth.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub left: Vec<(f64, [f64; 3])>,
    pub right: Vec<(f64, [f64; 3])>,
    pub truth: Vec<ScenarioTruth>,
}

struct Occurrence {
    template_idx: usize,
    onset: f64,
    speed: f64,
    phase: f64,
}

/// Synthesizes a continuous recording following `script`: rest segments
/// (gravity plus σ = 0.05 m/s² noise) interleaved with jittered gesture
/// instances. Deterministic for a fixed seed.
pub fn generate_scenario(
    templates: &[GestureTemplate],
    script: &ScenarioScript,
    jitter: &JitterSpec,
    seed: u64,
) -> Result<Scenario> {
    jitter.validate()?;
    if script.entries.is_empty() {
        return Err(Error::Parameter("scenario script is empty".into()));
    }
    let mut occurrences = Vec::with_capacity(script.entries.len());
    let mut truth = Vec::with_capacity(script.entries.len());
    let mut cursor = 0.0f64;
    for (i, entry) in script.entries.iter().enumerate() {
        let template_idx = templates
            .iter()
            .position(|t| t.name == entry.gesture)
            .ok_or_else(|| {
                Error::Parameter(format!("scenario references unknown gesture {:?}", entry.gesture))
            })?;
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("scenario-occurrence-{i}")));
        let speed = jitter.draw_speed(&mut rng);
        let phase = jitter.draw_phase(&mut rng);
        cursor += entry.rest_before_s;
        let active = templates[template_idx].duration / speed;
        occurrences.push(Occurrence {
            template_idx,
            onset: cursor,
            speed,
            phase,
        });
        truth.push(ScenarioTruth {
            t_start: cursor,
            t_end: cursor + active,
            label: entry.gesture.clone(),
        });
        cursor += active;
    }
    cursor += script.trailing_rest_s;

    let n = (cursor * NOMINAL_RATE_HZ).floor() as usize + 1;
    let rest_noise = Normal::new(0.0, REST_NOISE_SIGMA).unwrap();
    let move_noise = Normal::new(0.0, jitter.amplitude_sigma.max(1e-300)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "scenario-noise"));

    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / NOMINAL_RATE_HZ;
        for (side, out) in [(Side::Left, &mut left), (Side::Right, &mut right)] {
            let mut value = [0.0, 0.0, GRAVITY];
            let mut inside = false;
            for occ in &occurrences {
                let template = &templates[occ.template_idx];
                let onset = match side {
                    Side::Left => occ.onset,
                    Side::Right => occ.onset + occ.phase,
                };
                let tau = (t - onset) * occ.speed;
                if tau >= 0.0 && tau <= template.duration {
                    let g = template.gravity(side, tau);
                    let b = template.body(side, tau);
                    value = [g[0] + b[0], g[1] + b[1], g[2] + b[2]];
                    inside = true;
                    break;
                }
            }
            let sigma_active = if inside { jitter.amplitude_sigma } else { REST_NOISE_SIGMA };
            for v in value.iter_mut() {
                // draw in a fixed order to keep the stream deterministic
                let noise = if inside {
                    move_noise.sample(&mut rng)
                } else {
                    rest_noise.sample(&mut rng)
                };
                if sigma_active > 0.0 {
                    *v += noise;
                }
            }
            out.push((t, value));
        }
    }
    Ok(Scenario { left, right, truth })
}

/// Writes a scenario's recording pair and ground-truth CSV into `out_dir`
/// with the given stem.
pub fn write_scenario(scenario: &Scenario, out_dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let left_path = out_dir.join(format!("{stem}_left.csv"));
    let right_path = out_dir.join(format!("{stem}_right.csv"));
    let truth_path = out_dir.join(format!("{stem}_truth.csv"));
    write_csv(&left_path, &scenario.left)?;
    write_csv(&right_path, &scenario.right)?;
    let mut out = String::from("t_start,t_end,label\n");
    for e in &scenario.truth {
        out.push_str(&format!("{},{},{}\n", e.t_start, e.t_end, e.label));
    }
    fs::write(&truth_path, out).map_err(|e| Error::io(&truth_path, e))?;
    Ok(vec![left_path, right_path, truth_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_match_trait_matrix() {
        let t = builtin_templates();
        assert_eq!(t.len(), 5);
        let by_name = |n: &str| t.iter().find(|x| x.name == n).unwrap();
        assert!(by_name("occ").traits.recursive && !by_name("occ").traits.concurrent);
        assert!(by_name("swp").traits.recursive && by_name("swp").traits.concurrent);
        assert!(!by_name("fcot").traits.recursive && !by_name("fcot").traits.concurrent);
        assert!(!by_name("rff").traits.recursive && !by_name("rff").traits.concurrent);
        assert!(!by_name("wo").traits.recursive && by_name("wo").traits.concurrent);
        assert!(!by_name("fcot").traits.tool_constrained);
        assert!(!by_name("rff").traits.tool_constrained);
    }

    #[test]
    fn swp_repeats_its_stroke_three_times() {
        let t = builtin_templates();
        let swp = t.iter().find(|x| x.name == "swp").unwrap();
        let period = swp.duration / 3.0;
        for side in [Side::Left, Side::Right] {
            for i in 0..60 {
                let tau = i as f64 * period / 60.0;
                let a = swp.body(side, tau);
                let b = swp.body(side, tau + period);
                let c = swp.body(side, tau + 2.0 * period);
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() < 1e-9, "tau {tau} axis {k}");
                    assert!((a[k] - c[k]).abs() < 1e-9, "tau {tau} axis {k}");
                }
            }
        }
    }

    #[test]
    fn wo_hands_are_mirror_symmetric() {
        let t = builtin_templates();
        let wo = t.iter().find(|x| x.name == "wo").unwrap();
        for i in 0..200 {
            let tau = i as f64 * wo.duration / 199.0;
            let l = wo.body(Side::Left, tau);
            let r = wo.body(Side::Right, tau);
            assert_eq!(l[0], -r[0]);
            assert_eq!(l[1], r[1]);
            assert_eq!(l[2], r[2]);
        }
    }

    #[test]
    fn gravity_magnitude_stays_in_band() {
        for template in builtin_templates() {
            for side in [Side::Left, Side::Right] {
                for i in 0..400 {
                    let tau = i as f64 * template.duration / 399.0;
                    let g = template.gravity(side, tau);
                    let m = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                    assert!(
                        (9.3..=10.3).contains(&m),
                        "{} {side:?} tau {tau}: |g| = {m}",
                        template.name
                    );
                }
            }
        }
    }

    #[test]
    fn templates_start_and_end_at_rest() {
        for template in builtin_templates() {
            for side in [Side::Left, Side::Right] {
                for tau in [0.0, template.duration] {
                    let b = template.body(side, tau);
                    assert!(b.iter().all(|v| v.abs() < 1e-9), "{}", template.name);
                    let g = template.gravity(side, tau);
                    assert!((g[2] - GRAVITY).abs() < 1e-9, "{}", template.name);
                }
            }
        }
    }

    #[test]
    fn zero_jitter_trials_are_identical() {
        let t = builtin_templates();
        let jitter = JitterSpec::none();
        let mut rng1 = ChaCha8Rng::seed_from_u64(1);
        let mut rng2 = ChaCha8Rng::seed_from_u64(999);
        let a = synth_trial(&t[0], &jitter, &mut rng1);
        let b = synth_trial(&t[0], &jitter, &mut rng2);
        assert_eq!(a.left, b.left);
        assert_eq!(a.right, b.right);
    }

    #[test]
    fn speed_factor_scales_duration() {
        let t = builtin_templates();
        let jitter = JitterSpec {
            amplitude_sigma: 0.0,
            speed_range: (1.1, 1.1),
            phase_jitter_s: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trial = synth_trial(&t[0], &jitter, &mut rng);
        let expected_total = LEAD_REST_S + t[0].duration / 1.1 + TAIL_REST_S;
        let expected_n = (expected_total * NOMINAL_RATE_HZ).floor() as usize + 1;
        assert_eq!(trial.left.len(), expected_n);
    }

    #[test]
    fn dataset_generation_is_byte_identical() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let templates: Vec<GestureTemplate> = builtin_templates().into_iter().take(2).collect();
        let jitter = JitterSpec::moderate();
        let m1 = generate_dataset(&templates, 2, &jitter, 7, dir1.path()).unwrap();
        let m2 = generate_dataset(&templates, 2, &jitter, 7, dir2.path()).unwrap();
        assert_eq!(m1.len(), m2.len());
        assert_eq!(m1.len(), 2 * 2 * 3);
        for (a, b) in m1.iter().zip(m2.iter()) {
            assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
        }
    }

    #[test]
    fn generated_trials_pass_ingestion_and_normalization() {
        use crate::signal;
        let dir = tempfile::tempdir().unwrap();
        let templates: Vec<GestureTemplate> =
            builtin_templates().into_iter().take(1).collect();
        generate_dataset(&templates, 3, &JitterSpec::moderate(), 3, dir.path()).unwrap();
        let mut trials = Vec::new();
        let mut offsets = Vec::new();
        for idx in 0..3 {
            let stem = format!("occ_{idx:03}");
            let meta = signal::read_meta(&dir.path().join(format!("{stem}.meta"))).unwrap();
            let mut trial = signal::load_recording(
                &dir.path().join(format!("{stem}_left.csv")),
                &dir.path().join(format!("{stem}_right.csv")),
            )
            .unwrap();
            trial.gesture_label = meta.label.clone();
            offsets.push((meta.offset_left, meta.offset_right));
            trials.push(trial);
        }
        let synced = signal::synchronize_trials(&trials, &offsets).unwrap();
        let set = signal::normalize_lengths(&synced).unwrap();
        assert_eq!(set.gesture_id, "occ");
        assert!(set.k_m > 100);
    }

    #[test]
    fn scenario_scripts_produce_expected_annotations() {
        let templates = builtin_templates();
        let s1 = generate_scenario(
            &templates,
            &builtin_scenario(1).unwrap(),
            &JitterSpec::none(),
            11,
        )
        .unwrap();
        assert_eq!(s1.truth.len(), 2);
        assert!(s1.truth.iter().all(|t| t.label == "swp"));

        let s2 = generate_scenario(
            &templates,
            &builtin_scenario(2).unwrap(),
            &JitterSpec::none(),
            11,
        )
        .unwrap();
        let labels: Vec<&str> = s2.truth.iter().map(|t| t.label.as_str()).collect();
        assert_eq!(labels, vec!["wo", "rff", "fcot", "occ"]);
        // annotations are ordered and non-overlapping
        for w in s2.truth.windows(2) {
            assert!(w[0].t_end <= w[1].t_start);
        }
    }

    #[test]
    fn back_to_back_script_has_no_gaps() {
        let templates = builtin_templates();
        let script = ScenarioScript {
            entries: vec![
                ScenarioEntry {
                    gesture: "occ".into(),
                    rest_before_s: 0.0,
                },
                ScenarioEntry {
                    gesture: "wo".into(),
                    rest_before_s: 0.0,
                },
            ],
            trailing_rest_s: 0.0,
        };
        let s = generate_scenario(&templates, &script, &JitterSpec::none(), 1).unwrap();
        assert_eq!(s.truth.len(), 2);
        assert!((s.truth[0].t_end - s.truth[1].t_start).abs() < 1e-9);
    }
}
