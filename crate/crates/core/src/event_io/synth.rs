use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{Event, EventStream, LabelEntry, LabelTrack, Polarity};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub t: u64,
    pub x: f64,
    pub y: f64,
}

/// Piecewise-linear pupil-center path. Before the first and after the last
/// waypoint the center is held still.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::InvalidParam("trajectory needs at least one waypoint".into()));
        }
        if waypoints.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidParam(
                "trajectory waypoints must have strictly increasing times".into(),
            ));
        }
        Ok(Trajectory { waypoints })
    }

    pub fn stationary(x: f64, y: f64) -> Self {
        Trajectory {
            waypoints: vec![Waypoint { t: 0, x, y }],
        }
    }

    fn segment(&self, t: f64) -> Option<(&Waypoint, &Waypoint)> {
        let idx = self.waypoints.partition_point(|w| (w.t as f64) <= t);
        if idx == 0 || idx == self.waypoints.len() {
            None
        } else {
            Some((&self.waypoints[idx - 1], &self.waypoints[idx]))
        }
    }

    pub fn center_at(&self, t: f64) -> (f64, f64) {
        match self.segment(t) {
            Some((a, b)) => {
                let f = (t - a.t as f64) / (b.t - a.t) as f64;
                (a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f)
            }
            None if t < self.waypoints[0].t as f64 => (self.waypoints[0].x, self.waypoints[0].y),
            None => {
                let w = self.waypoints.last().unwrap();
                (w.x, w.y)
            }
        }
    }

    /// Velocity in pixels per microsecond.
    pub fn velocity_at(&self, t: f64) -> (f64, f64) {
        match self.segment(t) {
            Some((a, b)) => {
                let dt = (b.t - a.t) as f64;
                ((b.x - a.x) / dt, (b.y - a.y) / dt)
            }
            None => (0.0, 0.0),
        }
    }

    /// Random smooth-pursuit and saccade path inside the axis-aligned box
    /// `center ± half_extent`, always in motion.
    pub fn random_eye_motion(
        seed: u64,
        center: (f64, f64),
        half_extent: (f64, f64),
        duration_us: u64,
        pursuit_speed_px_s: (f64, f64),
        saccade_probability: f64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw_point = |rng: &mut ChaCha8Rng| {
            (
                center.0 + rng.random_range(-half_extent.0..=half_extent.0),
                center.1 + rng.random_range(-half_extent.1..=half_extent.1),
            )
        };
        let (mut x, mut y) = draw_point(&mut rng);
        let mut t = 0u64;
        let mut waypoints = vec![Waypoint { t, x, y }];
        while t < duration_us {
            let (nx, ny) = draw_point(&mut rng);
            let dist = ((nx - x).powi(2) + (ny - y).powi(2)).sqrt();
            if dist < 8.0 {
                continue;
            }
            let seg_us = if rng.random_bool(saccade_probability) {
                rng.random_range(20_000..=50_000)
            } else {
                let speed = rng.random_range(pursuit_speed_px_s.0..=pursuit_speed_px_s.1);
                ((dist / speed) * 1e6).round().max(1.0) as u64
            };
            t += seg_us;
            x = nx;
            y = ny;
            waypoints.push(Waypoint { t, x, y });
        }
        Trajectory { waypoints }
    }
}

/// Rectangle (sensor pixels) where eyelid noise is emitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyelidBand {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub width: u16,
    pub height: u16,
    pub duration_us: u64,
    pub pupil_radius: f64,
    pub trajectory: Trajectory,
    /// Expected rim events per square pixel swept by the moving pupil edge.
    pub edge_rate: f64,
    /// Uniform background noise, events per second over the whole sensor.
    pub noise_rate: f64,
    /// Eyelid-band noise, events per second inside `eyelid_band`.
    pub eyelid_rate: f64,
    pub eyelid_band: EyelidBand,
    pub label_rate_hz: f64,
    /// Simulation sub-step; velocity is held constant within one.
    pub step_us: u64,
}

impl SynthParams {
    pub fn new(width: u16, height: u16, duration_us: u64, trajectory: Trajectory) -> Self {
        SynthParams {
            width,
            height,
            duration_us,
            pupil_radius: 11.0,
            trajectory,
            edge_rate: 10.0,
            noise_rate: 2_000.0,
            eyelid_rate: 5_000.0,
            eyelid_band: EyelidBand {
                x0: 0.0,
                x1: width as f64,
                y0: 0.0,
                y1: 0.0,
            },
            label_rate_hz: 200.0,
            step_us: 200,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.edge_rate > 0.0) {
            return Err(Error::InvalidParam("edge_rate must be positive".into()));
        }
        if !(self.noise_rate >= 0.0) || !(self.eyelid_rate >= 0.0) {
            return Err(Error::InvalidParam("noise rates must be non-negative".into()));
        }
        if !(self.label_rate_hz > 0.0) || self.step_us == 0 || !(self.pupil_radius > 0.0) {
            return Err(Error::InvalidParam(
                "label rate, step and pupil radius must be positive".into(),
            ));
        }
        let r = self.pupil_radius;
        for w in &self.trajectory.waypoints {
            if w.x - r < 0.0
                || w.y - r < 0.0
                || w.x + r > (self.width - 1) as f64
                || w.y + r > (self.height - 1) as f64
            {
                return Err(Error::InvalidParam(format!(
                    "trajectory leaves the sensor at t={} us ({:.2}, {:.2})",
                    w.t, w.x, w.y
                )));
            }
        }
        Ok(())
    }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Generates an eye event stream and its ground-truth label track.
///
/// Rim events are emitted with density proportional to the normal component
/// of the pupil velocity: the leading edge darkens (`Off`), the trailing edge
/// brightens (`On`). A still pupil produces no rim events.
pub fn synth_eye_sequence(params: &SynthParams, seed: u64) -> Result<(EventStream, LabelTrack)> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.6).unwrap();
    let (w, h) = (params.width as f64, params.height as f64);
    let r = params.pupil_radius;
    let band = params.eyelid_band;
    let band_area = ((band.x1 - band.x0).max(0.0)) * ((band.y1 - band.y0).max(0.0));

    let mut events = Vec::new();
    let push = |events: &mut Vec<Event>, t: u64, x: f64, y: f64, p: Polarity| {
        let (xi, yi) = (x.round(), y.round());
        if xi >= 0.0 && yi >= 0.0 && xi < w && yi < h {
            events.push(Event::new(t, xi as u16, yi as u16, p));
        }
    };

    let step = params.step_us;
    let mut t0 = 0u64;
    while t0 < params.duration_us {
        let dt = step.min(params.duration_us - t0);
        let mid = t0 as f64 + dt as f64 * 0.5;
        let (vx, vy) = params.trajectory.velocity_at(mid);
        let speed = (vx * vx + vy * vy).sqrt();
        let swept = 4.0 * r * speed * dt as f64;
        let n_edge = poisson(&mut rng, params.edge_rate * swept);
        let heading = vy.atan2(vx);
        for _ in 0..n_edge {
            let t = t0 + rng.random_range(0..dt);
            let (cx, cy) = params.trajectory.center_at(t as f64);
            // Angle density |cos(theta - heading)|.
            let u = (2.0 * rng.random::<f64>() - 1.0).asin();
            let leading = rng.random_bool(0.5);
            let theta = heading + if leading { u } else { u + std::f64::consts::PI };
            let rr = r + jitter.sample(&mut rng);
            let p = if leading { Polarity::Off } else { Polarity::On };
            push(&mut events, t, cx + rr * theta.cos(), cy + rr * theta.sin(), p);
        }

        let n_noise = poisson(&mut rng, params.noise_rate * dt as f64 * 1e-6);
        for _ in 0..n_noise {
            let t = t0 + rng.random_range(0..dt);
            let x = rng.random_range(0.0..w - 0.5);
            let y = rng.random_range(0.0..h - 0.5);
            let p = if rng.random_bool(0.5) { Polarity::On } else { Polarity::Off };
            push(&mut events, t, x, y, p);
        }

        if band_area > 0.0 {
            let n_lid = poisson(&mut rng, params.eyelid_rate * dt as f64 * 1e-6);
            for _ in 0..n_lid {
                let t = t0 + rng.random_range(0..dt);
                let x = rng.random_range(band.x0..band.x1);
                let y = rng.random_range(band.y0..band.y1);
                let p = if rng.random_bool(0.5) { Polarity::On } else { Polarity::Off };
                push(&mut events, t, x, y, p);
            }
        }
        t0 += dt;
    }
    events.sort_by_key(|e| e.t);

    let period = 1e6 / params.label_rate_hz;
    let mut labels = Vec::new();
    let mut k = 0u64;
    loop {
        let t = ((k as f64 + 0.5) * period).round() as u64;
        if t >= params.duration_us {
            break;
        }
        let (x, y) = params.trajectory.center_at(t as f64);
        labels.push(LabelEntry { t, x, y, visible: true });
        k += 1;
    }

    let stream = EventStream::new(params.width, params.height, events)?;
    let track = LabelTrack::new(params.label_rate_hz, labels)?;
    Ok((stream, track))
}
