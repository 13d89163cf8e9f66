//! Agent demographics and the region distribution file they are drawn from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

pub const DISTRIBUTION_VERSION: u32 = 1;
const SUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Race {
    White,
    NonWhite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Student {
    Yes,
    No,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Employment {
    Yes,
    No,
    #[serde(rename = "n/a")]
    NotEligible,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HealthCategory {
    NonOverweight,
    Overweight,
    Obese,
}

pub const AGE_BANDS: [&str; 16] = [
    "12-14", "15-17", "18-19", "20-24", "25-29", "30-34", "35-39", "40-44", "45-49", "50-54",
    "55-59", "60-64", "65-69", "70-74", "75-79", "80+",
];

/// Index into [`AGE_BANDS`]; serialized as the band label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgeBand(u8);

impl AgeBand {
    pub fn new(index: usize) -> Option<Self> {
        (index < AGE_BANDS.len()).then_some(AgeBand(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn label(self) -> &'static str {
        AGE_BANDS[self.index()]
    }
}

impl fmt::Display for AgeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for AgeBand {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for AgeBand {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        AGE_BANDS
            .iter()
            .position(|b| *b == s)
            .map(|i| AgeBand(i as u8))
            .ok_or_else(|| de::Error::unknown_variant(&s, &AGE_BANDS))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentProfile {
    pub gender: Gender,
    pub age_band: AgeBand,
    pub race: Race,
    pub student: Student,
    pub employment: Employment,
    pub health_category: HealthCategory,
}

impl AgentProfile {
    /// Bounded numeric encoding used for attachment distances: age as
    /// ordinal/15, then one indicator per non-reference categorical level.
    pub fn features(&self) -> [f64; 8] {
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        [
            self.age_band.index() as f64 / 15.0,
            ind(self.gender == Gender::F),
            ind(self.race == Race::NonWhite),
            ind(self.student == Student::Yes),
            ind(self.employment == Employment::No),
            ind(self.employment == Employment::NotEligible),
            ind(self.health_category == HealthCategory::Overweight),
            ind(self.health_category == HealthCategory::Obese),
        ]
    }

    pub fn is_obese(&self) -> bool {
        self.health_category == HealthCategory::Obese
    }
}

/// Independent per-field categorical laws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactoredSpec {
    pub gender: BTreeMap<Gender, f64>,
    pub age_band: BTreeMap<AgeBand, f64>,
    pub race: BTreeMap<Race, f64>,
    pub student: BTreeMap<Student, f64>,
    pub employment: BTreeMap<Employment, f64>,
    pub health_category: BTreeMap<HealthCategory, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub profile: AgentProfile,
    pub p: f64,
}

/// Region-specific demographic distribution, either factored or a full joint table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub version: u32,
    pub region: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factored: Option<FactoredSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<Vec<JointEntry>>,
}

const ILLUSTRATIVE: &str = include_str!("illustrative_distribution.json");

fn check_law<'a>(location: &str, probs: impl Iterator<Item = (String, &'a f64)>) -> Result<()> {
    let mut total = 0.0;
    let mut any = false;
    for (key, &p) in probs {
        any = true;
        if !p.is_finite() || p < 0.0 {
            return Err(Error::Distribution {
                location: format!("{location}.{key}"),
                message: format!("probability {p} is negative or not finite"),
            });
        }
        total += p;
    }
    if !any {
        return Err(Error::Distribution {
            location: location.to_string(),
            message: "empty distribution".into(),
        });
    }
    if (total - 1.0).abs() > SUM_TOL {
        return Err(Error::Distribution {
            location: location.to_string(),
            message: format!("probabilities sum to {total}, expected 1"),
        });
    }
    Ok(())
}

fn keyed<K: Serialize>(m: &BTreeMap<K, f64>) -> impl Iterator<Item = (String, &f64)> + '_ {
    m.iter().map(|(k, p)| {
        let name = serde_json::to_value(k)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        (name, p)
    })
}

impl DistributionSpec {
    /// Built-in illustrative distribution. Its numbers are placeholders, not survey estimates.
    pub fn illustrative() -> Self {
        Self::from_json(ILLUSTRATIVE).expect("embedded distribution is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: DistributionSpec = serde_json::from_str(text).map_err(|e| Error::Distribution {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Distribution { location, message } => Error::Distribution {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != DISTRIBUTION_VERSION {
            return Err(Error::Distribution {
                location: "version".into(),
                message: format!("unsupported version {} (expected {DISTRIBUTION_VERSION})", self.version),
            });
        }
        match (&self.factored, &self.joint) {
            (Some(f), None) => {
                check_law("factored.gender", keyed(&f.gender))?;
                check_law("factored.age_band", keyed(&f.age_band))?;
                check_law("factored.race", keyed(&f.race))?;
                check_law("factored.student", keyed(&f.student))?;
                check_law("factored.employment", keyed(&f.employment))?;
                check_law("factored.health_category", keyed(&f.health_category))?;
                Ok(())
            }
            (None, Some(j)) => check_law(
                "joint",
                j.iter().enumerate().map(|(i, e)| (format!("[{i}].p"), &e.p)),
            ),
            _ => Err(Error::Distribution {
                location: "<root>".into(),
                message: "exactly one of \"factored\" or \"joint\" must be given".into(),
            }),
        }
    }

    pub fn sampler(&self) -> Result<ProfileSampler> {
        self.validate()?;
        let wi = |w: Vec<f64>, loc: &str| {
            WeightedIndex::new(w).map_err(|e| Error::Distribution {
                location: loc.to_string(),
                message: e.to_string(),
            })
        };
        Ok(match (&self.factored, &self.joint) {
            (Some(f), _) => {
                fn split<K: Copy>(m: &BTreeMap<K, f64>) -> (Vec<K>, Vec<f64>) {
                    m.iter().map(|(k, p)| (*k, *p)).unzip()
                }
                let (g, gw) = split(&f.gender);
                let (a, aw) = split(&f.age_band);
                let (r, rw) = split(&f.race);
                let (s, sw) = split(&f.student);
                let (e, ew) = split(&f.employment);
                let (h, hw) = split(&f.health_category);
                ProfileSampler::Factored {
                    gender: (g, wi(gw, "factored.gender")?),
                    age_band: (a, wi(aw, "factored.age_band")?),
                    race: (r, wi(rw, "factored.race")?),
                    student: (s, wi(sw, "factored.student")?),
                    employment: (e, wi(ew, "factored.employment")?),
                    health: (h, wi(hw, "factored.health_category")?),
                }
            }
            (None, Some(j)) => ProfileSampler::Joint {
                profiles: j.iter().map(|e| e.profile).collect(),
                index: wi(j.iter().map(|e| e.p).collect(), "joint")?,
            },
            (None, None) => unreachable!("validated"),
        })
    }
}

type Field<K> = (Vec<K>, WeightedIndex<f64>);

pub enum ProfileSampler {
    Factored {
        gender: Field<Gender>,
        age_band: Field<AgeBand>,
        race: Field<Race>,
        student: Field<Student>,
        employment: Field<Employment>,
        health: Field<HealthCategory>,
    },
    Joint {
        profiles: Vec<AgentProfile>,
        index: WeightedIndex<f64>,
    },
}

impl ProfileSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AgentProfile {
        fn pick<K: Copy, R: Rng + ?Sized>(f: &Field<K>, rng: &mut R) -> K {
            f.0[f.1.sample(rng)]
        }
        match self {
            ProfileSampler::Factored {
                gender,
                age_band,
                race,
                student,
                employment,
                health,
            } => AgentProfile {
                gender: pick(gender, rng),
                age_band: pick(age_band, rng),
                race: pick(race, rng),
                student: pick(student, rng),
                employment: pick(employment, rng),
                health_category: pick(health, rng),
            },
            ProfileSampler::Joint { profiles, index } => profiles[index.sample(rng)],
        }
    }
}

/// `n` independent profiles.
pub fn sample_agents<R: Rng + ?Sized>(
    dist: &DistributionSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<AgentProfile>> {
    let sampler = dist.sampler()?;
    Ok((0..n).map(|_| sampler.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn point_mass() -> DistributionSpec {
        let profile = AgentProfile {
            gender: Gender::F,
            age_band: AgeBand::new(4).unwrap(),
            race: Race::White,
            student: Student::No,
            employment: Employment::Yes,
            health_category: HealthCategory::Obese,
        };
        DistributionSpec {
            version: 1,
            region: "test".into(),
            factored: None,
            joint: Some(vec![JointEntry { profile, p: 1.0 }]),
        }
    }

    #[test]
    fn illustrative_default_is_valid() {
        let d = DistributionSpec::illustrative();
        assert!(d.factored.as_ref().unwrap().age_band.len() == 16);
    }

    #[test]
    fn point_mass_gives_identical_agents() {
        let agents = sample_agents(&point_mass(), 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(agents.iter().all(|a| *a == agents[0]));
    }

    #[test]
    fn same_seed_same_agents() {
        let d = DistributionSpec::illustrative();
        let a = sample_agents(&d, 200, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_agents(&d, 200, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn even_split_within_three_sigma() {
        let mut d = DistributionSpec::illustrative();
        d.factored.as_mut().unwrap().gender = [(Gender::M, 0.5), (Gender::F, 0.5)].into_iter().collect();
        let n = 100_000;
        let agents = sample_agents(&d, n, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let f = agents.iter().filter(|a| a.gender == Gender::F).count() as f64 / n as f64;
        let sd = (0.25 / n as f64).sqrt();
        assert!((f - 0.5).abs() <= 3.0 * sd);
    }

    #[test]
    fn bad_sum_names_the_field() {
        let text = ILLUSTRATIVE.replace("\"M\": 0.49", "\"M\": 0.59");
        match DistributionSpec::from_json(&text) {
            Err(Error::Distribution { location, .. }) => assert_eq!(location, "factored.gender"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_level_reports_position() {
        let text = ILLUSTRATIVE.replace("\"80+\"", "\"90+\"");
        match DistributionSpec::from_json(&text) {
            Err(Error::Distribution { location, message }) => {
                assert!(location.starts_with("line "), "{location}");
                assert!(message.contains("90+"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_probability_is_rejected() {
        let mut d = point_mass();
        let profile = d.joint.as_ref().unwrap()[0].profile;
        d.joint.as_mut().unwrap().push(JointEntry { profile, p: -0.5 });
        assert!(d.validate().is_err());
    }

    #[test]
    fn both_or_neither_mode_is_rejected() {
        let mut d = point_mass();
        d.factored = DistributionSpec::illustrative().factored;
        assert!(d.validate().is_err());
        d.factored = None;
        d.joint = None;
        assert!(d.validate().is_err());
    }

    #[test]
    fn feature_encoding() {
        let p = AgentProfile {
            gender: Gender::F,
            age_band: AgeBand::new(15).unwrap(),
            race: Race::NonWhite,
            student: Student::No,
            employment: Employment::NotEligible,
            health_category: HealthCategory::Overweight,
        };
        assert_eq!(p.features(), [1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
    }
}
