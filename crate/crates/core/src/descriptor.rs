//! Text descriptors for tree instances: `full:<n>`, `path:<n>`, `comb:<n>`,
//! `root:<n>`, `hash:<n>:<q>:<seed>` and `cnf:<file>` (optionally
//! `cnf:<file>:<n>`, where `n` must equal the variable count).

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::cnf::{cnf_tree, parse_dimacs};
use crate::error::{Error, Result};
use crate::tree::{hash_random_tree, CombTree, FullTree, PathTree, RootOnly, SuccinctTree};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeDescriptor {
    Full(u32),
    Path(u32),
    Comb(u32),
    Root(u32),
    Hash { n: u32, q: f64, seed: u64 },
    Cnf { path: PathBuf, n: Option<u32> },
}

fn bad(desc: &str, why: &str) -> Error {
    Error::InvalidParameter(format!("tree descriptor {desc:?}: {why}"))
}

impl FromStr for TreeDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad(s, "expected <kind>:<args>"))?;
        let int = |v: &str| v.parse::<u32>().map_err(|_| bad(s, "level budget must be a nonnegative integer"));
        match kind {
            "full" => Ok(Self::Full(int(rest)?)),
            "path" => Ok(Self::Path(int(rest)?)),
            "comb" => Ok(Self::Comb(int(rest)?)),
            "root" => Ok(Self::Root(int(rest)?)),
            "hash" => {
                let parts: Vec<&str> = rest.split(':').collect();
                let [n, q, seed] = parts.as_slice() else {
                    return Err(bad(s, "expected hash:<n>:<q>:<seed>"));
                };
                let q: f64 = q.parse().map_err(|_| bad(s, "q must be a number"))?;
                if !(0.0..=1.0).contains(&q) {
                    return Err(bad(s, "q must lie in [0, 1]"));
                }
                let seed = seed.parse().map_err(|_| bad(s, "seed must be a 64-bit integer"))?;
                Ok(Self::Hash { n: int(n)?, q, seed })
            }
            "cnf" => {
                if rest.is_empty() {
                    return Err(bad(s, "missing file path"));
                }
                match rest.rsplit_once(':') {
                    Some((path, n)) if !path.is_empty() && n.parse::<u32>().is_ok() => Ok(Self::Cnf {
                        path: path.into(),
                        n: n.parse().ok(),
                    }),
                    _ => Ok(Self::Cnf {
                        path: rest.into(),
                        n: None,
                    }),
                }
            }
            _ => Err(bad(s, "unknown kind; use full, path, comb, root, hash or cnf")),
        }
    }
}

impl fmt::Display for TreeDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Full(n) => write!(f, "full:{n}"),
            Self::Path(n) => write!(f, "path:{n}"),
            Self::Comb(n) => write!(f, "comb:{n}"),
            Self::Root(n) => write!(f, "root:{n}"),
            Self::Hash { n, q, seed } => write!(f, "hash:{n}:{q}:{seed}"),
            Self::Cnf { path, n: None } => write!(f, "cnf:{}", path.display()),
            Self::Cnf { path, n: Some(n) } => write!(f, "cnf:{}:{n}", path.display()),
        }
    }
}

impl TreeDescriptor {
    /// Builds the instance. `order` applies to CNF instances only.
    pub fn build(&self, order: Option<Vec<u32>>) -> Result<Box<dyn SuccinctTree>> {
        if order.is_some() && !matches!(self, Self::Cnf { .. }) {
            return Err(Error::InvalidParameter(
                "a variable order only applies to cnf instances".into(),
            ));
        }
        Ok(match *self {
            Self::Full(n) => Box::new(FullTree::new(n)?),
            Self::Path(n) => Box::new(PathTree::new(n)?),
            Self::Comb(n) => Box::new(CombTree::new(n)?),
            Self::Root(n) => Box::new(RootOnly::new(n)?),
            Self::Hash { n, q, seed } => Box::new(hash_random_tree(seed, n, q)?),
            Self::Cnf { ref path, n } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
                let cnf = parse_dimacs(&text)?;
                if let Some(n) = n {
                    if n != cnf.num_vars() {
                        return Err(Error::InvalidParameter(format!(
                            "{} has {} variables, descriptor says {n}",
                            path.display(),
                            cnf.num_vars()
                        )));
                    }
                }
                Box::new(cnf_tree(cnf, order)?.with_label(self.to_string()))
            }
        })
    }
}
