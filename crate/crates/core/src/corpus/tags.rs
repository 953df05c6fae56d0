use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The 17 universal part-of-speech tags.
pub const UPOS_TAGS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN",
    "PUNCT", "SCONJ", "SYM", "VERB", "X",
];

/// The 37 universal dependency relations (subtypes fold onto their base label).
pub const DEPREL_LABELS: [&str; 37] = [
    "acl", "advcl", "advmod", "amod", "appos", "aux", "case", "cc", "ccomp", "clf", "compound",
    "conj", "cop", "csubj", "dep", "det", "discourse", "dislocated", "expl", "fixed", "flat",
    "goeswith", "iobj", "list", "mark", "nmod", "nsubj", "nummod", "obj", "obl", "orphan",
    "parataxis", "punct", "reparandum", "root", "vocative", "xcomp",
];

macro_rules! closed_tag {
    ($name:ident, $table:ident) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(u8);

        impl $name {
            pub const COUNT: usize = $table.len();

            pub fn index(self) -> usize {
                self.0 as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                (i < Self::COUNT).then_some($name(i as u8))
            }

            pub fn as_str(self) -> &'static str {
                $table[self.0 as usize]
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $name::parse(&s).ok_or_else(|| {
                    serde::de::Error::custom(format!(
                        "`{s}` is not in the {} inventory",
                        stringify!($name)
                    ))
                })
            }
        }
    };
}

closed_tag!(Upos, UPOS_TAGS);
closed_tag!(Deprel, DEPREL_LABELS);

impl Upos {
    pub fn parse(s: &str) -> Option<Self> {
        UPOS_TAGS.iter().position(|t| *t == s).map(|i| Upos(i as u8))
    }
}

impl Deprel {
    /// Accepts language-specific subtypes such as `nsubj:pass`.
    pub fn parse(s: &str) -> Option<Self> {
        let base = s.split(':').next().unwrap_or(s);
        DEPREL_LABELS
            .iter()
            .position(|t| *t == base)
            .map(|i| Deprel(i as u8))
    }
}
