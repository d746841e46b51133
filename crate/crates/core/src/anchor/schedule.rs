use chrono::{DateTime, Duration, NaiveTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub enabled: bool,
    /// Daily fire time, UTC, as `HH:MM` or `HH:MM:SS`.
    #[serde(with = "fire_time")]
    pub fire_time: NaiveTime,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            enabled: true,
            fire_time: NaiveTime::from_hms_opt(2, 0, 0).unwrap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    Disabled,
    AlreadyAnchored,
    ClockRegressed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleAction {
    Anchor,
    Skip(SkipReason),
}

/// Latest daily fire instant that is not after `now`.
pub fn last_fire_at_or_before(now: DateTime<Utc>, fire: NaiveTime) -> DateTime<Utc> {
    let today = now.date_naive().and_time(fire).and_utc();
    if today <= now {
        today
    } else {
        today - Duration::days(1)
    }
}

pub fn run_schedule_tick(
    now: DateTime<Utc>,
    config: &ScheduleConfig,
    last_anchor: Option<DateTime<Utc>>,
) -> ScheduleAction {
    if !config.enabled {
        return ScheduleAction::Skip(SkipReason::Disabled);
    }
    let Some(last) = last_anchor else {
        return ScheduleAction::Anchor;
    };
    if now < last {
        tracing::warn!(%now, %last, "clock is behind the last anchor; skipping");
        return ScheduleAction::Skip(SkipReason::ClockRegressed);
    }
    if last < last_fire_at_or_before(now, config.fire_time) {
        ScheduleAction::Anchor
    } else {
        ScheduleAction::Skip(SkipReason::AlreadyAnchored)
    }
}

mod fire_time {
    use chrono::NaiveTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format("%H:%M:%S").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveTime, D::Error> {
        let s = String::deserialize(d)?;
        NaiveTime::parse_from_str(&s, "%H:%M:%S")
            .or_else(|_| NaiveTime::parse_from_str(&s, "%H:%M"))
            .map_err(serde::de::Error::custom)
    }
}
