use std::fmt;

use serde::{Deserialize, Serialize};

use crate::synthgen::SensorKind;

/// The 16 node types. Order fixes feature-table and slot layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    #[serde(rename = "sensor_rainfall")]
    Rainfall,
    #[serde(rename = "sensor_temperature")]
    Temperature,
    #[serde(rename = "sensor_apparent_temp")]
    ApparentTemp,
    #[serde(rename = "sensor_humidity")]
    Humidity,
    #[serde(rename = "sensor_wind_speed")]
    Wind,
    #[serde(rename = "sensor_snowfall")]
    Snowfall,
    #[serde(rename = "sensor_pm")]
    Pm,
    WeatherAlert,
    PreAlertType,
    PreAlertTime,
    PreAlertSeverity,
    Drainage,
    Location,
    ReportCount,
    ReportType,
    Report,
}

/// How a node type's raw value becomes a feature row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    BinnedNorm,
    OneHot,
    Coordinate,
    EmbeddingIndex,
    Id,
}

impl NodeType {
    pub const COUNT: usize = 16;
    pub const ALL: [NodeType; 16] = [
        NodeType::Rainfall,
        NodeType::Temperature,
        NodeType::ApparentTemp,
        NodeType::Humidity,
        NodeType::Wind,
        NodeType::Snowfall,
        NodeType::Pm,
        NodeType::WeatherAlert,
        NodeType::PreAlertType,
        NodeType::PreAlertTime,
        NodeType::PreAlertSeverity,
        NodeType::Drainage,
        NodeType::Location,
        NodeType::ReportCount,
        NodeType::ReportType,
        NodeType::Report,
    ];
    /// Everything a report links to; the slot order used by attention.
    pub const NEIGHBORS: [NodeType; 15] = [
        NodeType::Rainfall,
        NodeType::Temperature,
        NodeType::ApparentTemp,
        NodeType::Humidity,
        NodeType::Wind,
        NodeType::Snowfall,
        NodeType::Pm,
        NodeType::WeatherAlert,
        NodeType::PreAlertType,
        NodeType::PreAlertTime,
        NodeType::PreAlertSeverity,
        NodeType::Drainage,
        NodeType::Location,
        NodeType::ReportCount,
        NodeType::ReportType,
    ];
    pub const SENSORS: [NodeType; 7] = [
        NodeType::Rainfall,
        NodeType::Temperature,
        NodeType::ApparentTemp,
        NodeType::Humidity,
        NodeType::Wind,
        NodeType::Snowfall,
        NodeType::Pm,
    ];
    /// Non-sensor types that take part in importance ranking.
    pub const CONTEXT: [NodeType; 5] = [
        NodeType::WeatherAlert,
        NodeType::PreAlertType,
        NodeType::PreAlertTime,
        NodeType::PreAlertSeverity,
        NodeType::Drainage,
    ];
    /// Never ranked, hence never pruned.
    pub const STRUCTURAL: [NodeType; 3] = [NodeType::Location, NodeType::ReportCount, NodeType::ReportType];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Position in [`NodeType::NEIGHBORS`]; `None` for reports.
    pub fn slot(self) -> Option<usize> {
        (self != NodeType::Report).then_some(self as usize)
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeType::Rainfall => "sensor_rainfall",
            NodeType::Temperature => "sensor_temperature",
            NodeType::ApparentTemp => "sensor_apparent_temp",
            NodeType::Humidity => "sensor_humidity",
            NodeType::Wind => "sensor_wind_speed",
            NodeType::Snowfall => "sensor_snowfall",
            NodeType::Pm => "sensor_pm",
            NodeType::WeatherAlert => "weather_alert",
            NodeType::PreAlertType => "pre_alert_type",
            NodeType::PreAlertTime => "pre_alert_time",
            NodeType::PreAlertSeverity => "pre_alert_severity",
            NodeType::Drainage => "drainage",
            NodeType::Location => "location",
            NodeType::ReportCount => "report_count",
            NodeType::ReportType => "report_type",
            NodeType::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<NodeType> {
        NodeType::ALL.into_iter().find(|t| t.name() == s)
    }

    pub fn from_sensor(k: SensorKind) -> NodeType {
        NodeType::SENSORS[k.index()]
    }

    pub fn sensor(self) -> Option<SensorKind> {
        NodeType::SENSORS
            .iter()
            .position(|&t| t == self)
            .map(|i| SensorKind::ALL[i])
    }

    pub fn is_sensor(self) -> bool {
        self.index() < 7
    }

    pub fn is_context(self) -> bool {
        NodeType::CONTEXT.contains(&self)
    }

    /// Eligible for importance ranking and pruning.
    pub fn is_eligible(self) -> bool {
        self.is_sensor() || self.is_context()
    }

    /// Width of the stored feature row.
    pub fn dim(self) -> usize {
        match self {
            t if t.is_sensor() => 6,
            NodeType::WeatherAlert | NodeType::PreAlertType => 13,
            NodeType::PreAlertTime => 6,
            NodeType::PreAlertSeverity => 3,
            NodeType::Drainage => 3,
            NodeType::Location => 4,
            NodeType::ReportCount => 5,
            // Row index into the report-type embedding table.
            NodeType::ReportType => 1,
            NodeType::Report => 1,
            _ => unreachable!(),
        }
    }

    pub fn encoding(self) -> Encoding {
        match self {
            t if t.is_sensor() => Encoding::BinnedNorm,
            NodeType::Location => Encoding::Coordinate,
            NodeType::ReportType => Encoding::EmbeddingIndex,
            NodeType::Report => Encoding::Id,
            _ => Encoding::OneHot,
        }
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Small set of node types.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeSet(u16);

impl TypeSet {
    pub const EMPTY: TypeSet = TypeSet(0);

    pub fn all_neighbors() -> TypeSet {
        NodeType::NEIGHBORS.into_iter().collect()
    }

    pub fn contains(self, t: NodeType) -> bool {
        self.0 & (1 << t.index()) != 0
    }

    pub fn insert(&mut self, t: NodeType) {
        self.0 |= 1 << t.index();
    }

    pub fn remove(&mut self, t: NodeType) {
        self.0 &= !(1 << t.index());
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: TypeSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: TypeSet) -> TypeSet {
        TypeSet(self.0 | other.0)
    }

    pub fn difference(self, other: TypeSet) -> TypeSet {
        TypeSet(self.0 & !other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = NodeType> {
        NodeType::ALL.into_iter().filter(move |&t| self.contains(t))
    }
}

impl FromIterator<NodeType> for TypeSet {
    fn from_iter<I: IntoIterator<Item = NodeType>>(it: I) -> Self {
        let mut s = TypeSet::EMPTY;
        for t in it {
            s.insert(t);
        }
        s
    }
}

impl Serialize for TypeSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter().map(NodeType::name))
    }
}

impl<'de> Deserialize<'de> for TypeSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        names
            .iter()
            .map(|n| NodeType::parse(n).ok_or_else(|| serde::de::Error::custom(format!("unknown node type {n}"))))
            .collect()
    }
}

/// A directed, typed relation. Messages flow from `src` to `dst`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    /// report -> neighbor.
    Has(NodeType),
    /// neighbor -> report.
    Of(NodeType),
    /// location -> location within a region; its own reverse.
    AdjacentTo,
}

impl Relation {
    pub const COUNT: usize = 31;

    pub fn all() -> Vec<Relation> {
        NodeType::NEIGHBORS
            .iter()
            .map(|&t| Relation::Has(t))
            .chain(NodeType::NEIGHBORS.iter().map(|&t| Relation::Of(t)))
            .chain(std::iter::once(Relation::AdjacentTo))
            .collect()
    }

    pub fn index(self) -> usize {
        match self {
            Relation::Has(t) => t.slot().expect("neighbor type"),
            Relation::Of(t) => 15 + t.slot().expect("neighbor type"),
            Relation::AdjacentTo => 30,
        }
    }

    pub fn src(self) -> NodeType {
        match self {
            Relation::Has(_) => NodeType::Report,
            Relation::Of(t) => t,
            Relation::AdjacentTo => NodeType::Location,
        }
    }

    pub fn dst(self) -> NodeType {
        match self {
            Relation::Has(t) => t,
            Relation::Of(_) => NodeType::Report,
            Relation::AdjacentTo => NodeType::Location,
        }
    }

    pub fn reverse(self) -> Relation {
        match self {
            Relation::Has(t) => Relation::Of(t),
            Relation::Of(t) => Relation::Has(t),
            Relation::AdjacentTo => Relation::AdjacentTo,
        }
    }

    pub fn name(self) -> String {
        match self {
            Relation::Has(t) => format!("report__has__{}", t.name()),
            Relation::Of(t) => format!("{}__of__report", t.name()),
            Relation::AdjacentTo => "location__adjacent_to__location".into(),
        }
    }
}
