//! Run configuration: TOML sections `[problem]`, `[solver]`, `[smoothing]`,
//! `[unsteady]` and `[output]`, plus top-level `mode` and `seed`.

use std::fmt;
use std::marker::PhantomData;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::{self, DeserializeOwned, DeserializeSeed, IntoDeserializer, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use resmooth_core::problems::{BratuParams, ConvDiffParams, EulerParams, ProblemSpec};
use resmooth_core::{PtcConfig, RkSchedule, UnsteadyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Steady,
    Unsteady,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingSection {
    pub enabled: bool,
    pub stage_coefficients: Vec<f64>,
    pub n_cycles: usize,
}

impl Default for SmoothingSection {
    fn default() -> Self {
        let rk = RkSchedule::default();
        Self {
            enabled: false,
            stage_coefficients: rk.stage_coefficients().to_vec(),
            n_cycles: rk.n_cycles(),
        }
    }
}

impl SmoothingSection {
    pub fn schedule(&self) -> Result<RkSchedule> {
        Ok(RkSchedule::new(
            self.stage_coefficients.clone(),
            self.n_cycles,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnsteadySection {
    pub dt: f64,
    pub n_steps: usize,
}

impl Default for UnsteadySection {
    fn default() -> Self {
        Self {
            dt: 1.0,
            n_steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Directory for emitted files; `RESMOOTH_OUTPUT_DIR` takes precedence.
    pub dir: String,
    /// File name stem shared by every emitted file.
    pub prefix: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: ".".into(),
            prefix: "run".into(),
        }
    }
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub problem: ProblemSpec,
    /// Continuation settings; smoothing comes from `smoothing`, never from here.
    pub solver: PtcConfig,
    pub smoothing: SmoothingSection,
    pub unsteady: UnsteadySection,
    pub output: OutputSection,
}

impl RunConfig {
    /// Continuation settings with the smoothing section applied.
    pub fn ptc(&self) -> Result<PtcConfig> {
        let mut cfg = self.solver.clone();
        cfg.smoothing = if self.smoothing.enabled {
            Some(self.smoothing.schedule()?)
        } else {
            None
        };
        Ok(cfg)
    }

    pub fn unsteady_config(&self) -> Result<UnsteadyConfig> {
        Ok(UnsteadyConfig {
            dt: self.unsteady.dt,
            n_steps: self.unsteady.n_steps,
            inner: self.ptc()?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.solver.smoothing.is_some() {
            bail!("configure smoothing in the [smoothing] section, not under [solver]");
        }
        self.problem.build().context("invalid [problem] section")?;
        self.smoothing
            .schedule()
            .context("invalid [smoothing] section")?;
        self.ptc()?.validate().context("invalid [solver] section")?;
        if self.mode == Mode::Unsteady {
            self.unsteady_config()?
                .validate()
                .context("invalid [unsteady] section")?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig<P> {
    #[serde(default)]
    mode: Mode,
    #[serde(default)]
    seed: u64,
    problem: Named<P>,
    #[serde(default)]
    solver: PtcConfig,
    #[serde(default)]
    smoothing: SmoothingSection,
    #[serde(default)]
    unsteady: UnsteadySection,
    #[serde(default)]
    output: OutputSection,
}

/// Problem parameters read from a table that also carries the `name` tag.
/// The value deserializers stay those of the TOML table, so errors keep
/// their line numbers.
struct Named<P>(P);

impl<'de, P: Deserialize<'de>> Deserialize<'de> for Named<P> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct TableVisitor<P>(PhantomData<P>);

        impl<'de, P: Deserialize<'de>> Visitor<'de> for TableVisitor<P> {
            type Value = Named<P>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a problem table")
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<Named<P>, A::Error> {
                P::deserialize(de::value::MapAccessDeserializer::new(SkipName(map))).map(Named)
            }
        }

        deserializer.deserialize_map(TableVisitor(PhantomData))
    }
}

struct SkipName<A>(A);

impl<'de, A: MapAccess<'de>> MapAccess<'de> for SkipName<A> {
    type Error = A::Error;

    fn next_key_seed<K: DeserializeSeed<'de>>(
        &mut self,
        seed: K,
    ) -> Result<Option<K::Value>, A::Error> {
        let mut seed = Some(seed);
        loop {
            match self.0.next_key_seed(KeyUnlessName(&mut seed))? {
                None => return Ok(None),
                Some(Some(key)) => return Ok(Some(key)),
                Some(None) => {
                    self.0.next_value::<de::IgnoredAny>()?;
                }
            }
        }
    }

    fn next_value_seed<V: DeserializeSeed<'de>>(&mut self, seed: V) -> Result<V::Value, A::Error> {
        self.0.next_value_seed(seed)
    }
}

struct KeyUnlessName<'a, K>(&'a mut Option<K>);

impl<'de, K: DeserializeSeed<'de>> DeserializeSeed<'de> for KeyUnlessName<'_, K> {
    type Value = Option<K::Value>;

    fn deserialize<D: Deserializer<'de>>(self, deserializer: D) -> Result<Self::Value, D::Error> {
        let key = String::deserialize(deserializer)?;
        if key == "name" {
            return Ok(None);
        }
        let seed = self.0.take().expect("key seed used once");
        seed.deserialize(key.into_deserializer()).map(Some)
    }
}

const PROBLEM_NAMES: [&str; 3] = ["bratu", "convdiff", "euler"];

fn problem_name(text: &str) -> Result<String> {
    let table: toml::Table = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
    let problem = table
        .get("problem")
        .and_then(|p| p.as_table())
        .ok_or_else(|| anyhow!("missing [problem] section"))?;
    match problem.get("name") {
        Some(toml::Value::String(name)) if PROBLEM_NAMES.contains(&name.as_str()) => {
            Ok(name.clone())
        }
        Some(toml::Value::String(name)) => Err(anyhow!(
            "unknown problem `{name}`, expected one of {}",
            PROBLEM_NAMES.join(", ")
        )),
        Some(other) => Err(anyhow!(
            "problem name must be a string, got {}",
            other.type_str()
        )),
        None => Err(anyhow!(
            "[problem] needs a `name` ({})",
            PROBLEM_NAMES.join(", ")
        )),
    }
}

fn resolve<P: DeserializeOwned>(text: &str, wrap: fn(P) -> ProblemSpec) -> Result<RunConfig> {
    let raw: RawConfig<P> = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
    Ok(RunConfig {
        mode: raw.mode,
        seed: raw.seed,
        problem: wrap(raw.problem.0),
        solver: raw.solver,
        smoothing: raw.smoothing,
        unsteady: raw.unsteady,
        output: raw.output,
    })
}

/// Parse and validate a configuration; omitted keys take their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config = match problem_name(text)?.as_str() {
        "bratu" => resolve::<BratuParams>(text, ProblemSpec::Bratu)?,
        "convdiff" => resolve::<ConvDiffParams>(text, ProblemSpec::Convdiff)?,
        _ => resolve::<EulerParams>(text, ProblemSpec::Euler)?,
    };
    config.validate()?;
    Ok(config)
}

/// Apply `section.key=value` overrides on top of a parsed configuration.
/// Values are read as TOML, falling back to a bare string.
pub fn apply_overrides(config: &RunConfig, overrides: &[String]) -> Result<RunConfig> {
    if overrides.is_empty() {
        return Ok(config.clone());
    }
    let mut doc: toml::Table = toml::from_str(&config.to_toml()?)?;
    for item in overrides {
        let (path, value) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{item}` is not of the form key=value"))?;
        let value = parse_value(value.trim());
        let keys: Vec<&str> = path
            .trim()
            .split('.')
            .map(|k| match k {
                "beta_cfl1" => "cfl_growth",
                "beta_cfl2" => "cfl_cut",
                other => other,
            })
            .collect();
        let (last, parents) = keys.split_last().expect("split yields one item");
        let mut table = &mut doc;
        for key in parents {
            table = table
                .entry(key.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| anyhow!("override `{item}`: `{key}` is not a section"))?;
        }
        if keys == ["problem", "name"] && table.get("name") != Some(&value) {
            // parameters of another problem do not carry over
            table.clear();
        }
        table.insert(last.to_string(), value);
    }
    let text = toml::to_string(&doc)?;
    parse_config(&text).with_context(|| format!("applying overrides {overrides:?}"))
}

fn parse_value(text: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}
