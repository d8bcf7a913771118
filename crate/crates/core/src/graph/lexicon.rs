use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Object,
    ActionState,
    Other,
}

impl std::str::FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "object" => Ok(Role::Object),
            "action_state" | "action" | "state" => Ok(Role::ActionState),
            "other" => Ok(Role::Other),
            other => Err(Error::Config(format!("unknown role {other:?}"))),
        }
    }
}

/// Common instructional verbs and states.
pub const ACTIONS: &[&str] = &[
    "add", "adjust", "apply", "attach", "bake", "bend", "blend", "boil", "brush", "build", "carve", "check", "chop", "clamp", "clean", "close", "coat",
    "connect", "cook", "cover", "crack", "cut", "dice", "dig", "drain", "drill", "dry", "fill", "fit", "fix", "flip", "fold", "fry", "glue", "grate", "grill",
    "grind", "hammer", "heat", "hold", "insert", "install", "iron", "knead", "knot", "lay", "level", "lift", "loosen", "measure", "melt", "mix", "mount",
    "nail", "open", "paint", "peel", "place", "plant", "plug", "polish", "pour", "press", "prune", "pull", "push", "remove", "replace", "rinse", "roll", "rub",
    "sand", "saw", "scrape", "scratch", "screw", "seal", "season", "serve", "sew", "shake", "sharpen", "simmer", "slice", "spread", "sprinkle", "squeeze",
    "stir", "stitch", "strain", "tape", "tie", "tighten", "trim", "turn", "twist", "unscrew", "unplug", "wash", "water", "weld", "whisk", "wipe", "wrap",
    "may", "hot", "ready", "done",
];

/// Common instructional objects, tools and ingredients.
pub const OBJECTS: &[&str] = &[
    "bag",
    "batter",
    "bead",
    "blade",
    "board",
    "bolt",
    "bottle",
    "bowl",
    "bracket",
    "bread",
    "brick",
    "bucket",
    "butter",
    "cable",
    "cake",
    "card",
    "carpet",
    "cheese",
    "chisel",
    "cloth",
    "cup",
    "cushion",
    "dough",
    "drawer",
    "egg",
    "fabric",
    "faucet",
    "felt",
    "filter",
    "flour",
    "foam",
    "frame",
    "garlic",
    "glass",
    "glove",
    "grout",
    "handle",
    "head",
    "hinge",
    "hook",
    "hose",
    "jar",
    "key",
    "knife",
    "ladder",
    "lid",
    "light",
    "mat",
    "milk",
    "mirror",
    "mold",
    "nail",
    "needle",
    "nut",
    "oil",
    "onion",
    "oven",
    "pan",
    "paper",
    "pattern",
    "pencil",
    "pepper",
    "pipe",
    "plank",
    "plate",
    "pliers",
    "pot",
    "pump",
    "ribbon",
    "rope",
    "ruler",
    "salt",
    "sauce",
    "scissors",
    "screwdriver",
    "seed",
    "sheet",
    "shelf",
    "shower",
    "sink",
    "soil",
    "spatula",
    "sponge",
    "spoon",
    "stone",
    "sugar",
    "switch",
    "table",
    "tile",
    "tomato",
    "towel",
    "tray",
    "tube",
    "valve",
    "wall",
    "washer",
    "wheel",
    "wire",
    "wood",
    "wrench",
    "yarn",
    "zipper",
];

/// Narration filler that carries no task semantics.
pub const FILLERS: &[&str] = &["the", "so", "okay", "um", "now", "just", "and", "you", "gonna", "really", "like", "then"];

/// Word-to-role table with suffix heuristics as a fallback.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    roles: HashMap<String, Role>,
}

impl Lexicon {
    pub fn empty() -> Self {
        Lexicon::default()
    }

    /// The built-in word lists.
    pub fn bundled() -> Self {
        let mut lex = Lexicon::empty();
        // an object entry wins over the same spelling as a verb ("nail")
        for w in ACTIONS {
            lex.insert(w, Role::ActionState);
        }
        for w in OBJECTS {
            lex.insert(w, Role::Object);
        }
        for w in FILLERS {
            lex.insert(w, Role::Other);
        }
        lex
    }

    pub fn insert(&mut self, word: &str, role: Role) {
        self.roles.insert(word.to_lowercase(), role);
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    /// Applies `word<TAB>role` lines from `path` on top of `self`.
    pub fn extend_from_file(&mut self, path: &Path) -> Result<()> {
        let text = fsutil::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, role) = line
                .split_once('\t')
                .ok_or_else(|| Error::format("lexicon line", path, format!("line {}: expected word<TAB>role", lineno + 1)))?;
            let role: Role = role
                .parse()
                .map_err(|e| Error::format("lexicon line", path, format!("line {}: {e}", lineno + 1)))?;
            self.insert(word.trim(), role);
        }
        Ok(())
    }

    /// Lexicon entry, else `-ing`/`-ed` suffix with a stem of at least three
    /// letters, else [`Role::Other`].
    pub fn classify(&self, word: &str) -> Role {
        let w = word.to_lowercase();
        if let Some(&role) = self.roles.get(&w) {
            return role;
        }
        for suffix in ["ing", "ed"] {
            if let Some(stem) = w.strip_suffix(suffix) {
                if stem.chars().count() >= 3 && stem.chars().all(char::is_alphabetic) {
                    return Role::ActionState;
                }
            }
        }
        Role::Other
    }
}
