//! Question/answer prompt templates for the three envisioning regimes.
//!
//! Every prompt opens with a worked one-shot exchange (question, answer stem and a
//! bullet list) followed by a blank line and the real question, which ends on its answer
//! stem so the model continues with a bullet list.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Far,
    Near,
    #[serde(alias = "fine-grained", alias = "finegrained")]
    FineGrained,
}

/// Noun used for the fine-grained prompt, in both the plural ("species of dogs") and the
/// attributive form ("dog species").
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassType {
    plural: String,
    attributive: String,
}

impl ClassType {
    /// Derives the attributive form by dropping one trailing `s` (but not `ss`):
    /// `"dogs"` gives `"dog"`, `"food"` stays `"food"`.
    pub fn new(name: impl Into<String>) -> Self {
        let plural = name.into().trim().to_owned();
        let attributive = match plural.strip_suffix('s') {
            Some(stem) if !stem.ends_with('s') && !stem.is_empty() => stem.to_owned(),
            _ => plural.clone(),
        };
        Self { plural, attributive }
    }

    pub fn with_forms(plural: impl Into<String>, attributive: impl Into<String>) -> Self {
        Self {
            plural: plural.into(),
            attributive: attributive.into(),
        }
    }

    pub fn plural(&self) -> &str {
        &self.plural
    }

    pub fn attributive(&self) -> &str {
        &self.attributive
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PromptSpec {
    /// One prompt over the whole ID label set asking for `total` labels.
    Far { id_labels: LabelSet, total: usize },
    /// One prompt per ID label, each asking for `per_class` labels.
    Near { id_labels: LabelSet, per_class: usize },
    FineGrained {
        id_labels: LabelSet,
        total: usize,
        class_type: ClassType,
    },
}

impl PromptSpec {
    pub fn new(
        mode: PromptMode,
        id_labels: LabelSet,
        total: Option<usize>,
        per_class: Option<usize>,
        class_type: Option<&str>,
    ) -> Result<Self> {
        let positive = |v: Option<usize>, key: &str| match v {
            Some(n) if n > 0 => Ok(n),
            Some(_) => Err(Error::InvalidConfig(format!("{key} must be positive"))),
            None => Err(Error::InvalidConfig(format!("{mode:?} prompts require {key}"))),
        };
        match mode {
            PromptMode::Far => Ok(Self::Far {
                id_labels,
                total: positive(total, "L")?,
            }),
            PromptMode::Near => Ok(Self::Near {
                id_labels,
                per_class: positive(per_class, "l")?,
            }),
            PromptMode::FineGrained => {
                let class_type = class_type
                    .map(str::trim)
                    .filter(|c| !c.is_empty())
                    .ok_or_else(|| {
                        Error::InvalidConfig("fine-grained prompts require a class_type".into())
                    })?;
                Ok(Self::FineGrained {
                    id_labels,
                    total: positive(total, "L")?,
                    class_type: ClassType::new(class_type),
                })
            }
        }
    }

    pub fn mode(&self) -> PromptMode {
        match self {
            Self::Far { .. } => PromptMode::Far,
            Self::Near { .. } => PromptMode::Near,
            Self::FineGrained { .. } => PromptMode::FineGrained,
        }
    }

    pub fn id_labels(&self) -> &LabelSet {
        match self {
            Self::Far { id_labels, .. }
            | Self::Near { id_labels, .. }
            | Self::FineGrained { id_labels, .. } => id_labels,
        }
    }

    /// Number of outlier labels requested in total (`l * K` for near prompts).
    pub fn requested(&self) -> usize {
        match self {
            Self::Far { total, .. } | Self::FineGrained { total, .. } => *total,
            Self::Near {
                id_labels,
                per_class,
            } => per_class * id_labels.len(),
        }
    }
}

/// All prompts for one envisioning run: a single prompt for far and fine-grained mode,
/// one per ID label (in label order) for near mode.
pub fn build_prompts(spec: &PromptSpec) -> Vec<String> {
    match spec {
        PromptSpec::Far { id_labels, total } => vec![far_prompt(id_labels.labels(), *total)],
        PromptSpec::Near {
            id_labels,
            per_class,
        } => id_labels
            .iter()
            .map(|label| near_prompt(label, *per_class))
            .collect(),
        PromptSpec::FineGrained {
            id_labels,
            total,
            class_type,
        } => vec![fine_grained_prompt(id_labels.labels(), *total, class_type)],
    }
}

const FAR_EXAMPLE: &str = "Q: I have gathered images of 4 distinct categories: ['Husky dog', 'Garfield cat', 'churches', 'truck']. Summarize what broad categories these categories might fall into based on visual features. Now, I am looking to identify 5 categories that visually resemble these broad categories but have no direct relation to these broad categories. Please list these 5 items for me.
A: These 5 items are:
- black stone
- mountain
- Ginkgo Tree
- river
- Rapeseed
";

const NEAR_EXAMPLE: &str = "Q: Given the image category [water jug], please suggest visually similar categories that are not directly related or belong to the same primary group as [water jug]. Provide suggestions that share visual characteristics but are from broader and different domains than [water jug].
A: There are three classes similar to [water jug], and they are from broader and different domains than [water jug]:
- trumpets
- helmets
- rucksacks
";

const FINE_GRAINED_EXAMPLE: &str = "Q: I have a dataset containing 10 unique species of dogs. I need a list of 10 distinct dog species that are NOT present in my dataset, and ensure there are no repetitions in the list you provide. For context, the species in my dataset are: ['husky dog', 'alaskan Malamute', 'cossack sled dog', 'golden retriever', 'German Shepherd', 'Beagle', 'Bulldog', 'Poodle', 'Dachshund', 'Doberman Pinscher']
A: The other 10 dog species not in the dataset are:
- Labrador Retriever
- Rottweiler
- Boxer
- Border Collie
- Shih Tzu
- Akita
- Saint Bernard
- Australian Shepherd
- Great Dane
- Boston Terrier
";

pub fn far_prompt(id_labels: &[String], total: usize) -> String {
    let k = id_labels.len();
    let list = python_list(id_labels);
    format!(
        "{FAR_EXAMPLE}\nQ: I have gathered images of {k} distinct categories: {list}. \
         Summarize what broad categories these categories might fall into based on visual features. \
         Now, I am looking to identify {total} classes that visually resemble these broad categories \
         but have no direct relation to these broad categories. Please list these {total} items for me.\n\
         A: These {total} items are:"
    )
}

pub fn near_prompt(label: &str, per_class: usize) -> String {
    let count = number_word(per_class);
    format!(
        "{NEAR_EXAMPLE}\nQ: Given the image category [{label}], please suggest visually similar \
         categories that are not directly related or belong to the same primary group as [{label}]. \
         Provide suggestions that share visual characteristics but are from broader and different \
         domains than [{label}].\n\
         A: There are {count} classes similar to [{label}], and they are from broader and different \
         domains than [{label}]:"
    )
}

pub fn fine_grained_prompt(id_labels: &[String], total: usize, class_type: &ClassType) -> String {
    let k = id_labels.len();
    let list = python_list(id_labels);
    let plural = class_type.plural();
    let noun = class_type.attributive();
    format!(
        "{FINE_GRAINED_EXAMPLE}\nQ: I have a dataset containing {k} different species of {plural}. \
         I need a list of {total} distinct {noun} species that are NOT present in my dataset, and \
         ensure there are no repetitions in the list you provide. For context, the species in my \
         dataset are: {list}\n\
         A: The other {total} {noun} species not in the dataset are:"
    )
}

/// Renders labels the way Python prints a list of strings: `['a', 'b']`.
pub fn python_list(labels: &[String]) -> String {
    let items: Vec<String> = labels.iter().map(|l| python_str_repr(l)).collect();
    format!("[{}]", items.join(", "))
}

fn python_str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

fn number_word(n: usize) -> String {
    const WORDS: [&str; 21] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
        "nineteen", "twenty",
    ];
    WORDS.get(n).map_or_else(|| n.to_string(), |w| (*w).to_owned())
}
