use serde::{Deserialize, Serialize};

use super::domain::{AlertFamily, Category, Gazetteer, Season, SensorKind, Severity};

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn intersect(&self, o: &Range) -> Option<Range> {
        let lo = self.lo.max(o.lo);
        let hi = self.hi.min(o.hi);
        (lo <= hi).then_some(Range { lo, hi })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlertRule {
    pub family: AlertFamily,
    pub sensor: SensorKind,
    pub advisory: Range,
    pub warning: Range,
}

impl AlertRule {
    pub fn range(&self, s: Severity) -> Option<Range> {
        match s {
            Severity::Advisory => Some(self.advisory),
            Severity::Warning => Some(self.warning),
            Severity::None => None,
        }
    }
}

/// The six alert-weather rules (12 with both severities).
pub fn default_alert_rules() -> Vec<AlertRule> {
    use AlertFamily as A;
    use SensorKind as S;
    let r = |family, sensor, a: (f64, f64), w: (f64, f64)| AlertRule {
        family,
        sensor,
        advisory: Range::new(a.0, a.1),
        warning: Range::new(w.0, w.1),
    };
    vec![
        r(A::HeavyRain, S::Rainfall, (60.0, 90.0), (90.0, 150.0)),
        r(A::HeatWave, S::Temperature, (30.0, 35.0), (35.0, 40.0)),
        r(A::ColdWave, S::Temperature, (-20.0, -10.0), (-25.0, -15.0)),
        r(A::HeavySnow, S::Snowfall, (20.0, 50.0), (50.0, 100.0)),
        r(A::YellowDust, S::Pm, (200.0, 400.0), (400.0, 800.0)),
        r(A::Typhoon, S::Wind, (20.0, 35.0), (35.0, 50.0)),
    ]
}

/// Normal distribution truncated (by clamping) to the sensor's physical bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gauss {
    pub mean: f64,
    pub std: f64,
}

const fn g(mean: f64, std: f64) -> Gauss {
    Gauss { mean, std }
}

/// Risk-graded distribution of one primary sensor for one category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskGraded {
    pub category: Category,
    pub sensor: SensorKind,
    /// Indexed by [`Risk`].
    pub by_risk: [Gauss; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonalBaseline {
    pub season: Season,
    /// Indexed by [`SensorKind`]. Apparent temperature is derived from the
    /// others; its entry is the offset and noise added to the derivation.
    pub sensors: [Gauss; 7],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioWeights {
    pub direct: f64,
    pub pre_alert: f64,
    pub escalation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub bounds: [Range; 7],
    pub alert_rules: Vec<AlertRule>,
    pub risk_graded: Vec<RiskGraded>,
    pub baselines: Vec<SeasonalBaseline>,
    pub gazetteer: Gazetteer,
    pub scenario_weights: ScenarioWeights,
    /// Probability that a medium-risk alert is issued as a warning, and that a
    /// high-risk alert is issued as an advisory.
    pub severity_crossover: f64,
    pub lead_times: Vec<u32>,
    pub sigma: f64,
    /// Poisson rate of the co-located report count, by risk.
    pub colocated_lambda: [f64; 3],
    pub colocated_max: u32,
    /// Drainage state probabilities (clear, partial, blocked), by risk.
    pub drainage_probs: [[f64; 3]; 3],
    /// Relative weight of each hour of day for report timestamps.
    pub hour_weights: [f64; 24],
}

impl GenConfig {
    pub fn bound(&self, k: SensorKind) -> Range {
        self.bounds[k.index()]
    }

    pub fn rule(&self, f: AlertFamily) -> Option<&AlertRule> {
        self.alert_rules.iter().find(|r| r.family == f)
    }

    pub fn risk_graded_for(&self, c: Category, k: SensorKind) -> Option<&RiskGraded> {
        self.risk_graded
            .iter()
            .find(|r| r.category == c && r.sensor == k)
    }

    pub fn baseline(&self, s: Season) -> Option<&SeasonalBaseline> {
        self.baselines.iter().find(|b| b.season == s)
    }
}

impl Default for GenConfig {
    fn default() -> Self {
        use Category as C;
        use SensorKind as S;
        let graded = |category, sensor, l, m, h| RiskGraded {
            category,
            sensor,
            by_risk: [l, m, h],
        };
        let rain = [g(5.0, 5.0), g(50.0, 15.0), g(100.0, 20.0)];
        let mut risk_graded = Vec::new();
        for c in [C::Drainage, C::Landslide, C::Flood, C::LeafCleanup] {
            risk_graded.push(graded(c, S::Rainfall, rain[0], rain[1], rain[2]));
        }
        for c in [C::YellowDust, C::FineDust] {
            risk_graded.push(graded(c, S::Pm, g(35.0, 15.0), g(150.0, 40.0), g(350.0, 80.0)));
        }
        risk_graded.push(graded(C::Wildfire, S::Humidity, g(55.0, 10.0), g(35.0, 8.0), g(20.0, 6.0)));
        risk_graded.push(graded(C::Wildfire, S::Wind, g(4.0, 2.0), g(20.0, 5.0), g(35.0, 6.0)));
        risk_graded.push(graded(C::HeatWave, S::Temperature, g(27.0, 2.5), g(32.0, 2.0), g(37.0, 2.0)));
        for c in [C::HeavySnow, C::RoadIcing, C::ColdWave] {
            risk_graded.push(graded(c, S::Snowfall, g(3.0, 3.0), g(30.0, 10.0), g(60.0, 15.0)));
        }
        for c in [C::RoadIcing, C::ColdWave] {
            risk_graded.push(graded(c, S::Temperature, g(-2.0, 3.0), g(-12.0, 3.0), g(-18.0, 3.0)));
        }

        // rainfall, temperature, apparent-temp noise, humidity, wind, snowfall, pm
        let baselines = vec![
            SeasonalBaseline {
                season: Season::Spring,
                sensors: [g(3.0, 4.0), g(13.0, 6.0), g(0.0, 1.0), g(55.0, 15.0), g(3.5, 1.5), g(0.0, 0.3), g(35.0, 20.0)],
            },
            SeasonalBaseline {
                season: Season::Summer,
                sensors: [g(8.0, 10.0), g(27.0, 4.0), g(0.0, 1.0), g(75.0, 10.0), g(3.0, 1.5), g(0.0, 0.0), g(20.0, 10.0)],
            },
            SeasonalBaseline {
                season: Season::Autumn,
                sensors: [g(3.0, 5.0), g(14.0, 6.0), g(0.0, 1.0), g(60.0, 12.0), g(3.0, 1.5), g(0.0, 0.2), g(30.0, 15.0)],
            },
            SeasonalBaseline {
                season: Season::Winter,
                sensors: [g(1.0, 2.0), g(-2.0, 5.0), g(0.0, 1.0), g(50.0, 15.0), g(4.0, 2.0), g(2.0, 4.0), g(40.0, 20.0)],
            },
        ];

        let mut hour_weights = [1.0; 24];
        for (h, w) in hour_weights.iter_mut().enumerate() {
            // Quiet overnight, busiest mid-afternoon.
            *w = 1.0 + 0.25 * ((h as f64 - 9.0) * std::f64::consts::PI / 12.0).sin();
        }

        Self {
            bounds: [
                Range::new(0.0, 150.0),
                Range::new(-25.0, 40.0),
                Range::new(-30.0, 45.0),
                Range::new(0.0, 100.0),
                Range::new(0.0, 50.0),
                Range::new(0.0, 100.0),
                Range::new(0.0, 800.0),
            ],
            alert_rules: default_alert_rules(),
            risk_graded,
            baselines,
            gazetteer: Gazetteer::default(),
            scenario_weights: ScenarioWeights {
                direct: 1.0,
                pre_alert: 1.0,
                escalation: 1.0,
            },
            severity_crossover: 0.15,
            lead_times: vec![1, 2, 3, 6, 12, 24],
            sigma: 0.15,
            colocated_lambda: [1.0, 3.0, 6.0],
            colocated_max: 20,
            drainage_probs: [[0.7, 0.2, 0.1], [0.4, 0.4, 0.2], [0.2, 0.4, 0.4]],
            hour_weights,
        }
    }
}
