//! Scenario documents.
//!
//! A document is a list of `key = value` lines. Top-level keys come first;
//! `[delay]`, `[move]` and `[sweep]` may appear once, `[region]` and
//! `[attacker]` once per entry. `#` starts a comment. See
//! `configs/README.md` for the full key list.

use std::str::FromStr;

use thiserror::Error;
use vanet_sybil::pki::{CaId, Rect, VehicleId};
use vanet_sybil::sim::{
    AttackerSpec, CrossRegionMove, DelayModel, Micros, Placement, QueuePolicy, RegionSpec, ScenarioConfig, SimError,
    SweepAxis,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Scenario(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub sweep: Option<SweepSpec>,
}

/// Position of a token in the document, 1-based.
#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    column: usize,
}

impl Pos {
    fn err(self, message: impl Into<String>) -> ConfigError {
        ConfigError::Syntax {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Top,
    Delay,
    Region,
    Attacker,
    Move,
    Sweep,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Top => "top level",
            Section::Delay => "[delay]",
            Section::Region => "[region]",
            Section::Attacker => "[attacker]",
            Section::Move => "[move]",
            Section::Sweep => "[sweep]",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Section::Top => &[
                "seed",
                "home_ca",
                "vehicles",
                "placement",
                "accident_messages",
                "message_interval_us",
                "key_cache",
                "flagged",
            ],
            Section::Delay => &[
                "propagation_speed_mps",
                "per_byte_tx_ns",
                "rsu_proc_us",
                "rsu_ca_link_us",
                "ca_decrypt_proc_us",
                "escrow_rtt_base_us",
                "ca_home_proc_us",
                "ca_verify_proc_us",
                "queue_policy",
            ],
            Section::Region => &["id", "bounds", "rsu"],
            Section::Attacker => &["vehicle", "spoofs"],
            Section::Move => &["vehicle", "from", "to", "time_us"],
            Section::Sweep => &["axis", "values"],
        }
    }

    /// Keys that may be given more than once in one section.
    fn repeatable(self, key: &str) -> bool {
        matches!((self, key), (Section::Region, "rsu"))
    }
}

fn parse_num<T: FromStr>(text: &str, pos: Pos, what: &str) -> Result<T, ConfigError> {
    text.parse()
        .map_err(|_| pos.err(format!("{what} must be a non-negative integer, got `{text}`")))
}

fn parse_f64(text: &str, pos: Pos, what: &str) -> Result<f64, ConfigError> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(pos.err(format!("{what} must be a finite number, got `{text}`"))),
    }
}

fn parse_bool(text: &str, pos: Pos, what: &str) -> Result<bool, ConfigError> {
    match text {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(pos.err(format!("{what} must be true or false, got `{text}`"))),
    }
}

/// Comma-separated list; each item carries its own column.
fn items(text: &str, pos: Pos) -> Vec<(&str, Pos)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for part in text.split(',') {
        let lead = part.len() - part.trim_start().len();
        let item = part.trim();
        if !item.is_empty() {
            out.push((
                item,
                Pos {
                    line: pos.line,
                    column: pos.column + offset + lead,
                },
            ));
        }
        offset += part.len() + 1;
    }
    out
}

fn parse_floats<const N: usize>(text: &str, pos: Pos, what: &str) -> Result<[f64; N], ConfigError> {
    let parts = items(text, pos);
    if parts.len() != N {
        return Err(pos.err(format!("{what} needs {N} comma-separated numbers, got {}", parts.len())));
    }
    let mut out = [0.0; N];
    for (slot, (item, p)) in out.iter_mut().zip(parts) {
        *slot = parse_f64(item, p, what)?;
    }
    Ok(out)
}

/// `a, b, c` or an inclusive range `lo..hi [step s]`.
fn parse_values(text: &str, pos: Pos) -> Result<Vec<u64>, ConfigError> {
    if let Some((lo, rest)) = text.split_once("..") {
        let (hi, step) = match rest.split_once("step") {
            Some((hi, step)) => (hi.trim(), parse_num::<u64>(step.trim(), pos, "step")?),
            None => (rest.trim(), 1),
        };
        let lo: u64 = parse_num(lo.trim(), pos, "range start")?;
        let hi: u64 = parse_num(hi, pos, "range end")?;
        if step == 0 {
            return Err(pos.err("step must be positive"));
        }
        let values: Vec<u64> = (lo..=hi).step_by(step as usize).collect();
        if values.is_empty() {
            return Err(pos.err(format!("range {lo}..{hi} is empty")));
        }
        return Ok(values);
    }
    items(text, pos)
        .into_iter()
        .map(|(item, p)| parse_num(item, p, "sweep value"))
        .collect()
}

fn parse_placement(text: &str, pos: Pos) -> Result<Placement, ConfigError> {
    match text.split_once(':') {
        None if text == "uniform" => Ok(Placement::Uniform),
        Some(("fixed_range", range)) => {
            let range = parse_f64(range.trim(), pos, "fixed_range")?;
            if range < 0.0 {
                return Err(pos.err("fixed_range must be non-negative"));
            }
            Ok(Placement::FixedRange(range))
        }
        _ => Err(pos.err(format!(
            "placement must be `uniform` or `fixed_range:<metres>`, got `{text}`"
        ))),
    }
}

#[derive(Default)]
struct RegionDraft {
    header: Option<Pos>,
    id: Option<u64>,
    bounds: Option<Rect>,
    rsus: Vec<(f64, f64)>,
}

#[derive(Default)]
struct AttackerDraft {
    header: Option<Pos>,
    vehicle: Option<(u64, Pos)>,
    spoofs: Vec<(u64, Pos)>,
}

#[derive(Default)]
struct MoveDraft {
    header: Option<Pos>,
    vehicle: Option<(u64, Pos)>,
    from: Option<(u64, Pos)>,
    to: Option<(u64, Pos)>,
    time_us: Option<u64>,
}

#[derive(Default)]
struct SweepDraft {
    header: Option<Pos>,
    axis: Option<SweepAxis>,
    values: Option<Vec<u64>>,
}

struct Draft {
    seed: u64,
    home_ca: u64,
    vehicles: Option<usize>,
    placement: Placement,
    accident_messages: usize,
    message_interval: u64,
    key_cache: bool,
    flagged: Vec<(u64, Pos)>,
    delay: DelayModel,
    regions: Vec<RegionDraft>,
    attackers: Vec<AttackerDraft>,
    moved: Option<MoveDraft>,
    sweep: Option<SweepDraft>,
}

impl Default for Draft {
    fn default() -> Self {
        let defaults = ScenarioConfig::new(Vec::new(), 0);
        Self {
            seed: defaults.seed,
            home_ca: 0,
            vehicles: None,
            placement: defaults.placement,
            accident_messages: defaults.accident_messages,
            message_interval: defaults.message_interval.as_u64(),
            key_cache: defaults.key_cache,
            flagged: Vec::new(),
            delay: defaults.delay_model,
            regions: Vec::new(),
            attackers: Vec::new(),
            moved: None,
            sweep: None,
        }
    }
}

impl Draft {
    fn set(&mut self, section: Section, key: &str, value: &str, pos: Pos) -> Result<(), ConfigError> {
        let us = |v: &str| parse_num::<u64>(v, pos, key).map(Micros);
        match section {
            Section::Top => match key {
                "seed" => self.seed = parse_num(value, pos, key)?,
                "home_ca" => self.home_ca = parse_num(value, pos, key)?,
                "vehicles" => self.vehicles = Some(parse_num(value, pos, key)?),
                "placement" => self.placement = parse_placement(value, pos)?,
                "accident_messages" => self.accident_messages = parse_num(value, pos, key)?,
                "message_interval_us" => self.message_interval = parse_num(value, pos, key)?,
                "key_cache" => self.key_cache = parse_bool(value, pos, key)?,
                "flagged" => {
                    for (item, p) in items(value, pos) {
                        self.flagged.push((parse_num(item, p, "flagged vehicle")?, p));
                    }
                }
                _ => unreachable!("key list checked"),
            },
            Section::Delay => {
                let d = &mut self.delay;
                match key {
                    "propagation_speed_mps" => {
                        d.propagation_speed_mps = parse_f64(value, pos, key)?;
                        if d.propagation_speed_mps <= 0.0 {
                            return Err(pos.err("propagation_speed_mps must be positive"));
                        }
                    }
                    "per_byte_tx_ns" => d.per_byte_tx_ns = parse_num(value, pos, key)?,
                    "rsu_proc_us" => d.rsu_proc = us(value)?,
                    "rsu_ca_link_us" => d.rsu_ca_link = us(value)?,
                    "ca_decrypt_proc_us" => d.ca_decrypt_proc = us(value)?,
                    "escrow_rtt_base_us" => d.escrow_rtt_base = us(value)?,
                    "ca_home_proc_us" => d.ca_home_proc = us(value)?,
                    "ca_verify_proc_us" => d.ca_verify_proc = us(value)?,
                    "queue_policy" => {
                        d.queue_policy = match value {
                            "fifo" => QueuePolicy::FifoSingleServer,
                            "unlimited" => QueuePolicy::Unlimited,
                            _ => return Err(pos.err(format!("queue_policy must be fifo or unlimited, got `{value}`"))),
                        }
                    }
                    _ => unreachable!("key list checked"),
                }
            }
            Section::Region => {
                let r = self.regions.last_mut().expect("section opened");
                match key {
                    "id" => r.id = Some(parse_num(value, pos, "region id")?),
                    "bounds" => {
                        let [x0, y0, x1, y1] = parse_floats::<4>(value, pos, "bounds")?;
                        r.bounds = Some(Rect::new(x0, y0, x1, y1));
                    }
                    "rsu" => {
                        let [x, y] = parse_floats::<2>(value, pos, "rsu")?;
                        r.rsus.push((x, y));
                    }
                    _ => unreachable!("key list checked"),
                }
            }
            Section::Attacker => {
                let a = self.attackers.last_mut().expect("section opened");
                match key {
                    "vehicle" => a.vehicle = Some((parse_num(value, pos, "attacker vehicle")?, pos)),
                    "spoofs" => {
                        for (item, p) in items(value, pos) {
                            a.spoofs.push((parse_num(item, p, "spoofed vehicle")?, p));
                        }
                    }
                    _ => unreachable!("key list checked"),
                }
            }
            Section::Move => {
                let m = self.moved.as_mut().expect("section opened");
                match key {
                    "vehicle" => m.vehicle = Some((parse_num(value, pos, "moving vehicle")?, pos)),
                    "from" => m.from = Some((parse_num(value, pos, "from")?, pos)),
                    "to" => m.to = Some((parse_num(value, pos, "to")?, pos)),
                    "time_us" => m.time_us = Some(parse_num(value, pos, key)?),
                    _ => unreachable!("key list checked"),
                }
            }
            Section::Sweep => {
                let s = self.sweep.as_mut().expect("section opened");
                match key {
                    "axis" => s.axis = Some(value.parse().map_err(|e: String| pos.err(e))?),
                    "values" => s.values = Some(parse_values(value, pos)?),
                    _ => unreachable!("key list checked"),
                }
            }
        }
        Ok(())
    }

    fn finish(self, end: Pos) -> Result<Scenario, ConfigError> {
        let vehicles = self
            .vehicles
            .ok_or_else(|| end.err("missing required key `vehicles`"))?;
        let vehicle = |(index, pos): (u64, Pos), role: &str| {
            if (index as u128) < vehicles as u128 {
                Ok(VehicleId::from_index(index))
            } else {
                Err(pos.err(format!("{role} {index} is not declared (vehicles = {vehicles})")))
            }
        };

        if self.regions.is_empty() {
            return Err(end.err("at least one [region] is required"));
        }
        let mut regions = Vec::with_capacity(self.regions.len());
        for r in &self.regions {
            let header = r.header.expect("set on open");
            let id = r.id.ok_or_else(|| header.err("[region] is missing `id`"))?;
            let bounds = r.bounds.ok_or_else(|| header.err("[region] is missing `bounds`"))?;
            let mut spec = RegionSpec::new(CaId::from_u64(id), bounds);
            spec.rsus = r.rsus.clone();
            regions.push(spec);
        }
        let region_id = |(id, pos): (u64, Pos)| {
            if self.regions.iter().any(|r| r.id == Some(id)) {
                Ok(CaId::from_u64(id))
            } else {
                Err(pos.err(format!("region {id} is not declared")))
            }
        };

        let mut attackers = Vec::with_capacity(self.attackers.len());
        for a in self.attackers {
            let header = a.header.expect("set on open");
            let attacker = vehicle(
                a.vehicle.ok_or_else(|| header.err("[attacker] is missing `vehicle`"))?,
                "attacker",
            )?;
            if a.spoofs.is_empty() {
                return Err(header.err("[attacker] needs at least one entry in `spoofs`"));
            }
            let spoofs = a
                .spoofs
                .into_iter()
                .map(|s| vehicle(s, "spoofed vehicle"))
                .collect::<Result<Vec<_>, _>>()?;
            attackers.push(AttackerSpec { attacker, spoofs });
        }

        let flagged = self
            .flagged
            .into_iter()
            .map(|f| vehicle(f, "flagged vehicle"))
            .collect::<Result<Vec<_>, _>>()?;

        let cross_region_move = match self.moved {
            None => None,
            Some(m) => {
                let header = m.header.expect("set on open");
                let missing = |k: &str| header.err(format!("[move] is missing `{k}`"));
                Some(CrossRegionMove {
                    vehicle: vehicle(m.vehicle.ok_or_else(|| missing("vehicle"))?, "moving vehicle")?,
                    from_region: region_id(m.from.ok_or_else(|| missing("from"))?)?,
                    to_region: region_id(m.to.ok_or_else(|| missing("to"))?)?,
                    move_time: Micros(m.time_us.ok_or_else(|| missing("time_us"))?),
                })
            }
        };

        let sweep = match self.sweep {
            None => None,
            Some(s) => {
                let header = s.header.expect("set on open");
                let axis = s.axis.ok_or_else(|| header.err("[sweep] is missing `axis`"))?;
                let values = s.values.ok_or_else(|| header.err("[sweep] is missing `values`"))?;
                if values.is_empty() {
                    return Err(header.err("[sweep] has no values"));
                }
                if values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(header.err("[sweep] values must be strictly ascending"));
                }
                Some(SweepSpec { axis, values })
            }
        };

        let mut config = ScenarioConfig::new(regions, vehicles);
        config.seed = self.seed;
        config.home_ca = CaId::from_u64(self.home_ca);
        config.placement = self.placement;
        config.accident_messages = self.accident_messages;
        config.message_interval = Micros(self.message_interval);
        config.key_cache = self.key_cache;
        config.flagged = flagged;
        config.attackers = attackers;
        config.delay_model = self.delay;
        config.cross_region_move = cross_region_move;
        config.validate()?;
        Ok(Scenario { config, sweep })
    }
}

/// Parses and validates a scenario document.
pub fn parse_config(text: &str) -> Result<Scenario, ConfigError> {
    let mut draft = Draft::default();
    let mut section = Section::Top;
    let mut seen: Vec<&str> = Vec::new();
    let mut last_line = 0;

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        let pos = Pos {
            line,
            column: indent + 1,
        };

        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| pos.err("section header is missing `]`"))?
                .trim();
            section = match name {
                "delay" => Section::Delay,
                "region" => Section::Region,
                "attacker" => Section::Attacker,
                "move" => Section::Move,
                "sweep" => Section::Sweep,
                other => return Err(pos.err(format!("unknown section `[{other}]`"))),
            };
            let header = Some(pos);
            let once = |present: bool| {
                if present {
                    Err(pos.err(format!("section [{name}] given twice")))
                } else {
                    Ok(())
                }
            };
            match section {
                Section::Delay => once(seen.contains(&"[delay]"))?,
                Section::Region => draft.regions.push(RegionDraft {
                    header,
                    ..Default::default()
                }),
                Section::Attacker => draft.attackers.push(AttackerDraft {
                    header,
                    ..Default::default()
                }),
                Section::Move => {
                    once(draft.moved.is_some())?;
                    draft.moved = Some(MoveDraft {
                        header,
                        ..Default::default()
                    });
                }
                Section::Sweep => {
                    once(draft.sweep.is_some())?;
                    draft.sweep = Some(SweepDraft {
                        header,
                        ..Default::default()
                    });
                }
                Section::Top => unreachable!(),
            }
            seen.clear();
            if section == Section::Delay {
                seen.push("[delay]");
            }
            continue;
        }

        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| pos.err(format!("expected `key = value`, got `{trimmed}`")))?;
        let key = key.trim();
        let value_offset = content.find('=').expect("split above") + 1;
        let value_lead = content[value_offset..].len() - content[value_offset..].trim_start().len();
        let value_pos = Pos {
            line,
            column: value_offset + value_lead + 1,
        };
        let value = value.trim();

        let Some(&known) = section.keys().iter().find(|k| **k == key) else {
            return Err(pos.err(format!("unknown key `{key}` in {}", section.name())));
        };
        if seen.contains(&known) && !section.repeatable(known) {
            return Err(pos.err(format!("key `{key}` given twice in {}", section.name())));
        }
        seen.push(known);
        if value.is_empty() {
            return Err(value_pos.err(format!("key `{key}` has no value")));
        }
        draft.set(section, key, value, value_pos)?;
    }

    draft.finish(Pos {
        line: last_line.max(1),
        column: 1,
    })
}
