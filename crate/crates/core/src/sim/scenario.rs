//! Scripted touch scenarios and their plain-text config format.
//!
//! ```text
//! # one line per setting, one line per event
//! total_duration=60
//! sample_period=0.002
//! rise_time_constant=0.03
//! noise_sigma=4e-15
//! event kind=two-finger position=10 side=front start=5 duration=5
//! event kind=one-hand position=2 side=back start=15 duration=5 hover=true
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{HodError, Result};
use crate::sim::physics::PlateModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TouchKind {
    TwoFinger,
    FourFinger,
    OneHand,
    TwoHands,
}

impl TouchKind {
    pub const ALL: [TouchKind; 4] = [
        TouchKind::TwoFinger,
        TouchKind::FourFinger,
        TouchKind::OneHand,
        TouchKind::TwoHands,
    ];

    /// Effective contact area in m².
    pub fn contact_area(self) -> f64 {
        match self {
            TouchKind::TwoFinger => 2e-4,
            TouchKind::FourFinger => 4e-4,
            TouchKind::OneHand => 10e-4,
            TouchKind::TwoHands => 20e-4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TouchKind::TwoFinger => "two-finger",
            TouchKind::FourFinger => "four-finger",
            TouchKind::OneHand => "one-hand",
            TouchKind::TwoHands => "two-hands",
        }
    }
}

impl FromStr for TouchKind {
    type Err = HodError;
    fn from_str(s: &str) -> Result<Self> {
        TouchKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| HodError::Scenario(format!("unknown touch kind '{s}'")))
    }
}

impl fmt::Display for TouchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Contact point on the rim, as a clock position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClockPosition {
    Twelve,
    Ten,
    Two,
    Three,
    Nine,
    Eight,
    Four,
    Six,
}

impl ClockPosition {
    pub const ALL: [ClockPosition; 8] = [
        ClockPosition::Twelve,
        ClockPosition::Ten,
        ClockPosition::Two,
        ClockPosition::Three,
        ClockPosition::Nine,
        ClockPosition::Eight,
        ClockPosition::Four,
        ClockPosition::Six,
    ];

    pub fn hour(self) -> u8 {
        match self {
            ClockPosition::Twelve => 12,
            ClockPosition::Ten => 10,
            ClockPosition::Two => 2,
            ClockPosition::Three => 3,
            ClockPosition::Nine => 9,
            ClockPosition::Eight => 8,
            ClockPosition::Four => 4,
            ClockPosition::Six => 6,
        }
    }

    pub fn from_hour(hour: u8) -> Result<Self> {
        ClockPosition::ALL
            .into_iter()
            .find(|p| p.hour() == hour)
            .ok_or_else(|| HodError::Scenario(format!("no contact point at {hour} o'clock")))
    }

    /// Coupling loss where the spokes meet the rim.
    pub fn attenuation(self) -> f64 {
        match self {
            ClockPosition::Six => 0.5,
            ClockPosition::Three | ClockPosition::Nine => 0.8,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Front,
    Back,
    Inside,
    Outside,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Front, Side::Back, Side::Inside, Side::Outside];

    /// The inner seam puts the most material between hand and mat.
    pub fn attenuation(self) -> f64 {
        match self {
            Side::Front => 1.0,
            Side::Back | Side::Outside => 0.9,
            Side::Inside => 0.3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Front => "front",
            Side::Back => "back",
            Side::Inside => "inside",
            Side::Outside => "outside",
        }
    }
}

impl FromStr for Side {
    type Err = HodError;
    fn from_str(s: &str) -> Result<Self> {
        Side::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| HodError::Scenario(format!("unknown side '{s}'")))
    }
}

/// How a hand couples into the mat. Distances and permittivity describe the
/// steering-wheel cover; the approach and mains-pickup terms shape the
/// transient around a contact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactModel {
    pub cover_permittivity: f64,
    /// Hand-to-mat distance through the cover, meters.
    pub cover_distance: f64,
    /// Share of the full contact delta already reached by a hand hovering
    /// just above the rim.
    pub approach_fraction: f64,
    /// Duration of the approach and retreat ramps, seconds.
    pub approach_time: f64,
    /// Peak-to-peak mains pickup through the driver's body while in contact, farads.
    pub hum_amplitude: f64,
    pub hum_frequency: f64,
}

impl Default for ContactModel {
    fn default() -> Self {
        ContactModel {
            cover_permittivity: 3.5,
            cover_distance: 2.5e-3,
            approach_fraction: 0.15,
            approach_time: 0.5,
            hum_amplitude: 0.1e-12,
            hum_frequency: 50.0,
        }
    }
}

impl ContactModel {
    /// Full capacitance increase for a contact, farads.
    pub fn touch_delta(&self, kind: TouchKind, position: ClockPosition, side: Side) -> Result<f64> {
        let plate = PlateModel::new(self.cover_permittivity, kind.contact_area(), self.cover_distance)?;
        Ok(plate.capacitance()? * position.attenuation() * side.attenuation())
    }

    fn validate(&self) -> Result<()> {
        let ok = self.cover_permittivity >= 1.0
            && self.cover_distance > 0.0
            && (0.0..1.0).contains(&self.approach_fraction)
            && self.approach_time >= 0.0
            && self.hum_amplitude >= 0.0
            && self.hum_frequency >= 0.0
            && [
                self.cover_permittivity,
                self.cover_distance,
                self.approach_time,
                self.hum_amplitude,
                self.hum_frequency,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(HodError::Scenario(format!("invalid contact model {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TouchEvent {
    pub kind: TouchKind,
    pub position: ClockPosition,
    pub side: Side,
    /// Contact start, seconds.
    pub start: f64,
    pub duration: f64,
    /// Hand approaches and hovers for the event span without making contact.
    pub hover: bool,
}

impl TouchEvent {
    pub fn touch(kind: TouchKind, position: ClockPosition, side: Side, start: f64, duration: f64) -> Self {
        TouchEvent {
            kind,
            position,
            side,
            start,
            duration,
            hover: false,
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TouchScenario {
    pub events: Vec<TouchEvent>,
    pub total_duration: f64,
    pub rise_time_constant: f64,
    /// Standard deviation of additive sensor noise, farads.
    pub noise_sigma: f64,
    pub sample_period: f64,
    pub contact: ContactModel,
}

impl TouchScenario {
    pub const DEFAULT_SAMPLE_PERIOD: f64 = 0.002;
    pub const DEFAULT_RISE_TIME_CONSTANT: f64 = 0.03;
    pub const DEFAULT_NOISE_SIGMA: f64 = 4e-15;

    pub fn new(total_duration: f64) -> Self {
        TouchScenario {
            events: Vec::new(),
            total_duration,
            rise_time_constant: Self::DEFAULT_RISE_TIME_CONSTANT,
            noise_sigma: Self::DEFAULT_NOISE_SIGMA,
            sample_period: Self::DEFAULT_SAMPLE_PERIOD,
            contact: ContactModel::default(),
        }
    }

    /// Touch for `on` seconds, release for `off` seconds, cycling through
    /// `points` until `total_duration` is filled. The first touch starts
    /// after one release period.
    pub fn alternating(
        kind: TouchKind,
        points: &[(ClockPosition, Side)],
        on: f64,
        off: f64,
        total_duration: f64,
    ) -> Self {
        let mut s = TouchScenario::new(total_duration);
        let mut start = off;
        let mut k = 0;
        while !points.is_empty() && start + on <= total_duration + 1e-9 {
            let (position, side) = points[k % points.len()];
            s.events.push(TouchEvent::touch(kind, position, side, start, on));
            start += on + off;
            k += 1;
        }
        s
    }

    /// Every clock position on every side except the inner seam.
    pub fn typical_points() -> Vec<(ClockPosition, Side)> {
        let mut pts = Vec::new();
        for side in [Side::Front, Side::Outside, Side::Back] {
            for pos in ClockPosition::ALL {
                if pos != ClockPosition::Six {
                    pts.push((pos, side));
                }
            }
        }
        pts
    }

    pub fn num_samples(&self) -> usize {
        (self.total_duration / self.sample_period).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HodError::Scenario(m));
        if !(self.total_duration > 0.0) || !self.total_duration.is_finite() {
            return bad(format!("total_duration must be > 0, got {}", self.total_duration));
        }
        if !(self.sample_period > 0.0) || !self.sample_period.is_finite() {
            return bad(format!("sample_period must be > 0, got {}", self.sample_period));
        }
        if !(self.rise_time_constant > 0.0) || !self.rise_time_constant.is_finite() {
            return bad(format!(
                "rise_time_constant must be > 0, got {}",
                self.rise_time_constant
            ));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if self.num_samples() == 0 {
            return bad("scenario shorter than one sample".into());
        }
        self.contact.validate()?;
        let tol = 1e-9;
        let mut prev_end = f64::NEG_INFINITY;
        for (i, e) in self.events.iter().enumerate() {
            if !(e.start >= 0.0) || !(e.duration > 0.0) || !e.end().is_finite() {
                return bad(format!(
                    "event {i} has invalid span start={} duration={}",
                    e.start, e.duration
                ));
            }
            if e.start + tol < prev_end {
                return bad(format!("event {i} starts before the previous event ends"));
            }
            if e.end() > self.total_duration + tol {
                return bad(format!("event {i} extends past total_duration"));
            }
            prev_end = e.end();
        }
        Ok(())
    }

    /// Parses the key=value config format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = TouchScenario::new(f64::NAN);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| HodError::Scenario(format!("line {}: {m}", lineno + 1));
            if let Some(rest) = line.strip_prefix("event") {
                if !rest.starts_with(char::is_whitespace) {
                    return Err(err(format!("unrecognized line '{line}'")));
                }
                s.events.push(parse_event(rest).map_err(|e| err(e.to_string()))?);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got '{line}'")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| err(format!("bad number '{}'", value.trim())))?;
            match key.trim() {
                "total_duration" => s.total_duration = v,
                "sample_period" => s.sample_period = v,
                "rise_time_constant" => s.rise_time_constant = v,
                "noise_sigma" => s.noise_sigma = v,
                "cover_permittivity" => s.contact.cover_permittivity = v,
                "cover_distance" => s.contact.cover_distance = v,
                "approach_fraction" => s.contact.approach_fraction = v,
                "approach_time" => s.contact.approach_time = v,
                "hum_amplitude" => s.contact.hum_amplitude = v,
                "hum_frequency" => s.contact.hum_frequency = v,
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        if s.total_duration.is_nan() {
            return Err(HodError::Scenario("missing total_duration".into()));
        }
        s.events.sort_by(|a, b| a.start.total_cmp(&b.start));
        s.validate()?;
        Ok(s)
    }

    pub fn to_config(&self) -> String {
        let mut out = String::new();
        let c = &self.contact;
        for (k, v) in [
            ("total_duration", self.total_duration),
            ("sample_period", self.sample_period),
            ("rise_time_constant", self.rise_time_constant),
            ("noise_sigma", self.noise_sigma),
            ("cover_permittivity", c.cover_permittivity),
            ("cover_distance", c.cover_distance),
            ("approach_fraction", c.approach_fraction),
            ("approach_time", c.approach_time),
            ("hum_amplitude", c.hum_amplitude),
            ("hum_frequency", c.hum_frequency),
        ] {
            out.push_str(&format!("{k}={v:?}\n"));
        }
        for e in &self.events {
            out.push_str(&format!(
                "event kind={} position={} side={} start={:?} duration={:?}{}\n",
                e.kind,
                e.position.hour(),
                e.side.as_str(),
                e.start,
                e.duration,
                if e.hover { " hover=true" } else { "" }
            ));
        }
        out
    }
}

fn parse_event(fields: &str) -> Result<TouchEvent> {
    let mut kind = None;
    let mut position = None;
    let mut side = Side::Front;
    let mut start = None;
    let mut duration = None;
    let mut hover = false;
    for field in fields.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| HodError::Scenario(format!("expected key=value, got '{field}'")))?;
        let num = || {
            v.parse::<f64>()
                .map_err(|_| HodError::Scenario(format!("bad number '{v}' for {k}")))
        };
        match k {
            "kind" => kind = Some(v.parse()?),
            "position" => {
                let h: u8 = v
                    .parse()
                    .map_err(|_| HodError::Scenario(format!("bad clock position '{v}'")))?;
                position = Some(ClockPosition::from_hour(h)?);
            }
            "side" => side = v.parse()?,
            "start" => start = Some(num()?),
            "duration" => duration = Some(num()?),
            "hover" => hover = v.parse().map_err(|_| HodError::Scenario(format!("bad flag '{v}'")))?,
            other => return Err(HodError::Scenario(format!("unknown event key '{other}'"))),
        }
    }
    let missing = |n: &str| HodError::Scenario(format!("event missing {n}"));
    Ok(TouchEvent {
        kind: kind.ok_or_else(|| missing("kind"))?,
        position: position.ok_or_else(|| missing("position"))?,
        side,
        start: start.ok_or_else(|| missing("start"))?,
        duration: duration.ok_or_else(|| missing("duration"))?,
        hover,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let mut s = TouchScenario::alternating(
            TouchKind::FourFinger,
            &[(ClockPosition::Ten, Side::Front), (ClockPosition::Six, Side::Inside)],
            5.0,
            5.0,
            40.0,
        );
        s.total_duration = 50.0;
        s.events.push(TouchEvent {
            hover: true,
            ..TouchEvent::touch(TouchKind::TwoHands, ClockPosition::Two, Side::Back, 45.0, 3.0)
        });
        s.noise_sigma = 1e-15;
        let back = TouchScenario::parse(&s.to_config()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn parses_hover_and_comments() {
        let text = "# demo\ntotal_duration=10\nevent kind=one-hand position=2 side=back start=1 duration=2 hover=true # note\n";
        let s = TouchScenario::parse(text).unwrap();
        assert_eq!(s.events.len(), 1);
        assert!(s.events[0].hover);
        assert_eq!(s.events[0].position, ClockPosition::Two);
        assert_eq!(s.sample_period, 0.002);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "",
            "total_duration=0",
            "total_duration=10\nevent kind=one-hand position=5 start=0 duration=1",
            "total_duration=10\nevent kind=paw position=2 start=0 duration=1",
            "total_duration=10\nevent kind=one-hand position=2 start=9 duration=2",
            "total_duration=10\nevent kind=one-hand position=2 start=1 duration=3\nevent kind=one-hand position=2 start=2 duration=1",
            "total_duration=10\nrise_time_constant=0",
            "total_duration=10\nbogus=1",
            "total_duration=abc",
            "eventful=1",
        ] {
            assert!(TouchScenario::parse(text).is_err(), "accepted: {text:?}");
        }
    }

    #[test]
    fn alternating_counts_events() {
        let s = TouchScenario::alternating(
            TouchKind::TwoFinger,
            &[(ClockPosition::Ten, Side::Front)],
            5.0,
            5.0,
            60.0,
        );
        assert_eq!(s.events.len(), 6);
        assert_eq!(s.num_samples(), 30_000);
        s.validate().unwrap();
    }

    #[test]
    fn deltas_follow_contact_area() {
        let c = ContactModel::default();
        for pos in ClockPosition::ALL {
            for side in Side::ALL {
                let d: Vec<f64> = TouchKind::ALL
                    .iter()
                    .map(|k| c.touch_delta(*k, pos, side).unwrap())
                    .collect();
                assert!(d.windows(2).all(|w| w[0] < w[1]), "{pos:?} {side:?} {d:?}");
            }
        }
        // Two fingers on the front at 10 o'clock change C_s by about 5% of 50 pF.
        let two = c
            .touch_delta(TouchKind::TwoFinger, ClockPosition::Ten, Side::Front)
            .unwrap();
        assert!((two / 50e-12 - 0.05).abs() < 0.005, "{two}");
    }
}
