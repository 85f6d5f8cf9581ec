//! Vocabulary shared by the generator, the graph encoder and the explainer.

use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::SynthError;

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident { $($var:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $s)] $var),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$var),+];

            pub fn name(self) -> &'static str {
                match self { $($name::$var => $s),+ }
            }

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s { $($s => Some($name::$var),)+ _ => None }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum!(
    /// The 11 report categories, grouped by season.
    Category {
        YellowDust => "yellow_dust_report",
        FineDust => "fine_dust_report",
        Wildfire => "wildfire_prevention",
        Drainage => "drainage_maintenance",
        Landslide => "landslide_risk",
        HeatWave => "heat_wave",
        Flood => "flood_prevention",
        LeafCleanup => "leaf_cleanup",
        HeavySnow => "heavy_snow",
        RoadIcing => "road_icing_prevention",
        ColdWave => "cold_wave",
    }
);

named_enum!(Season {
    Spring => "spring",
    Summer => "summer",
    Autumn => "autumn",
    Winter => "winter",
});

named_enum!(SensorKind {
    Rainfall => "rainfall",
    Temperature => "temperature",
    ApparentTemp => "apparent_temp",
    Humidity => "humidity",
    Wind => "wind",
    Snowfall => "snowfall",
    Pm => "pm",
});

named_enum!(
    /// Weather alert families. Each one governs a single sensor.
    AlertFamily {
        HeavyRain => "heavy_rain",
        HeatWave => "heat_wave",
        ColdWave => "cold_wave",
        HeavySnow => "heavy_snow",
        YellowDust => "yellow_dust",
        Typhoon => "typhoon",
    }
);

named_enum!(Severity {
    None => "none",
    Advisory => "advisory",
    Warning => "warning",
});

named_enum!(Risk {
    Low => "low",
    Medium => "medium",
    High => "high",
});

named_enum!(Drainage {
    Clear => "clear",
    Partial => "partially_blocked",
    Blocked => "blocked",
});

impl Season {
    pub fn months(self) -> [u32; 3] {
        match self {
            Season::Spring => [3, 4, 5],
            Season::Summer => [6, 7, 8],
            Season::Autumn => [9, 10, 11],
            Season::Winter => [12, 1, 2],
        }
    }

    pub fn of_month(month: u32) -> Season {
        match month {
            3..=5 => Season::Spring,
            6..=8 => Season::Summer,
            9..=11 => Season::Autumn,
            _ => Season::Winter,
        }
    }
}

impl Category {
    pub fn season(self) -> Season {
        use Category::*;
        match self {
            YellowDust | FineDust | Wildfire => Season::Spring,
            Drainage | Landslide | HeatWave | Flood => Season::Summer,
            LeafCleanup => Season::Autumn,
            HeavySnow | RoadIcing | ColdWave => Season::Winter,
        }
    }

    pub fn primary_sensors(self) -> &'static [SensorKind] {
        use Category::*;
        use SensorKind as S;
        match self {
            YellowDust | FineDust => &[S::Pm],
            Wildfire => &[S::Humidity, S::Wind],
            Drainage | Landslide | Flood | LeafCleanup => &[S::Rainfall],
            HeatWave => &[S::Temperature],
            HeavySnow => &[S::Snowfall],
            RoadIcing | ColdWave => &[S::Snowfall, S::Temperature],
        }
    }

    /// Alert families whose governed sensor is one of this category's
    /// primary sensors.
    pub fn alert_families(self) -> &'static [AlertFamily] {
        use AlertFamily as A;
        use Category::*;
        match self {
            YellowDust | FineDust => &[A::YellowDust],
            Wildfire => &[A::Typhoon],
            Drainage | Landslide | Flood | LeafCleanup => &[A::HeavyRain],
            HeatWave => &[A::HeatWave],
            HeavySnow => &[A::HeavySnow],
            RoadIcing | ColdWave => &[A::HeavySnow, A::ColdWave],
        }
    }
}

impl AlertFamily {
    pub fn sensor(self) -> SensorKind {
        match self {
            AlertFamily::HeavyRain => SensorKind::Rainfall,
            AlertFamily::HeatWave | AlertFamily::ColdWave => SensorKind::Temperature,
            AlertFamily::HeavySnow => SensorKind::Snowfall,
            AlertFamily::YellowDust => SensorKind::Pm,
            AlertFamily::Typhoon => SensorKind::Wind,
        }
    }
}

/// One of 13 alert states: `none` or a (family, advisory|warning) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum AlertState {
    None,
    Active(AlertFamily, Severity),
}

impl AlertState {
    pub const COUNT: usize = 13;

    pub fn all() -> Vec<AlertState> {
        (0..Self::COUNT).map(|i| Self::from_index(i).expect("in range")).collect()
    }

    /// `none` = 0, then advisory/warning pairs in family order.
    pub fn index(self) -> usize {
        match self {
            AlertState::None => 0,
            AlertState::Active(f, s) => 1 + 2 * f.index() + usize::from(s == Severity::Warning),
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        if i == 0 {
            return Some(AlertState::None);
        }
        let f = *AlertFamily::ALL.get((i - 1) / 2)?;
        let s = if (i - 1) % 2 == 0 {
            Severity::Advisory
        } else {
            Severity::Warning
        };
        Some(AlertState::Active(f, s))
    }

    pub fn severity(self) -> Severity {
        match self {
            AlertState::None => Severity::None,
            AlertState::Active(_, s) => s,
        }
    }

    pub fn family(self) -> Option<AlertFamily> {
        match self {
            AlertState::None => None,
            AlertState::Active(f, _) => Some(f),
        }
    }

    pub fn name(self) -> String {
        match self {
            AlertState::None => "none".into(),
            AlertState::Active(f, s) => format!("{}_{}", f.name(), s.name()),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        (0..Self::COUNT)
            .filter_map(Self::from_index)
            .find(|a| a.name() == s)
    }
}

impl From<AlertState> for String {
    fn from(a: AlertState) -> String {
        a.name()
    }
}

impl TryFrom<String> for AlertState {
    type Error = SynthError;
    fn try_from(s: String) -> Result<Self, SynthError> {
        AlertState::parse(&s).ok_or(SynthError::Vocabulary {
            field: "alert",
            value: s,
        })
    }
}

impl fmt::Display for AlertState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Sensor readings in physical units, one per [`SensorKind`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sensors {
    pub rainfall: f64,
    pub temperature: f64,
    pub apparent_temp: f64,
    pub humidity: f64,
    pub wind: f64,
    pub snowfall: f64,
    pub pm: f64,
}

impl Sensors {
    pub fn get(&self, k: SensorKind) -> f64 {
        match k {
            SensorKind::Rainfall => self.rainfall,
            SensorKind::Temperature => self.temperature,
            SensorKind::ApparentTemp => self.apparent_temp,
            SensorKind::Humidity => self.humidity,
            SensorKind::Wind => self.wind,
            SensorKind::Snowfall => self.snowfall,
            SensorKind::Pm => self.pm,
        }
    }

    pub fn set(&mut self, k: SensorKind, v: f64) {
        match k {
            SensorKind::Rainfall => self.rainfall = v,
            SensorKind::Temperature => self.temperature = v,
            SensorKind::ApparentTemp => self.apparent_temp = v,
            SensorKind::Humidity => self.humidity = v,
            SensorKind::Wind => self.wind = v,
            SensorKind::Snowfall => self.snowfall = v,
            SensorKind::Pm => self.pm = v,
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        let mut out = [0.0; 7];
        for &k in SensorKind::ALL {
            out[k.index()] = self.get(k);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreAlert {
    #[serde(rename = "type")]
    pub kind: AlertState,
    /// Hours before the report timestamp; 0 when `kind` is `none`.
    pub lead_time: u32,
    pub severity: Severity,
}

impl PreAlert {
    pub const NONE: PreAlert = PreAlert {
        kind: AlertState::None,
        lead_time: 0,
        severity: Severity::None,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub id: u64,
    pub timestamp: NaiveDateTime,
    pub category: Category,
    pub season: Season,
    /// District name from the gazetteer.
    pub location: String,
    pub sensors: Sensors,
    pub alert: AlertState,
    pub pre_alert: PreAlert,
    pub drainage: Drainage,
    pub colocated_count: u32,
    pub risk: Risk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct District {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub region: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gazetteer {
    pub districts: Vec<District>,
    /// Reference point for the distance feature.
    pub center: (f64, f64),
}

impl Default for Gazetteer {
    fn default() -> Self {
        let d = |name: &str, lat, lon, region| District {
            name: name.into(),
            lat,
            lon,
            region,
        };
        Self {
            districts: vec![
                d("jongno", 37.5735, 126.9790, 0),
                d("jung", 37.5641, 126.9979, 0),
                d("yongsan", 37.5326, 126.9905, 0),
                d("gangnam", 37.5172, 127.0473, 1),
                d("seocho", 37.4837, 127.0324, 1),
                d("songpa", 37.5145, 127.1059, 1),
                d("mapo", 37.5663, 126.9019, 2),
                d("yeongdeungpo", 37.5264, 126.8962, 2),
                d("gangseo", 37.5509, 126.8495, 2),
            ],
            center: (37.5665, 126.9780),
        }
    }
}

impl Gazetteer {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.districts.iter().position(|d| d.name == name)
    }

    pub fn lookup(&self, name: &str) -> Result<&District, SynthError> {
        self.districts
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| SynthError::UnknownDistrict(name.to_string()))
    }

    /// Indices of districts sharing `idx`'s region, `idx` included.
    pub fn region_members(&self, idx: usize) -> Vec<usize> {
        let r = self.districts[idx].region;
        (0..self.districts.len())
            .filter(|&j| self.districts[j].region == r)
            .collect()
    }
}
