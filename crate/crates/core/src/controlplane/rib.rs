use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::netmodel::{AsNumber, Prefix, SwitchId};

pub const DEFAULT_LOCAL_PREF: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RouteSource {
    Originated,
    Session(SwitchId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RibEntry {
    pub prefix: Prefix,
    /// Adjacent switch to forward to; `None` for locally originated routes.
    pub next_hop: Option<SwitchId>,
    pub as_path: Vec<AsNumber>,
    pub local_pref: u32,
    pub source: RouteSource,
    /// Learned over an eBGP session.
    #[serde(default)]
    pub ebgp: bool,
}

impl RibEntry {
    pub fn originated(prefix: Prefix, asn: AsNumber) -> Self {
        RibEntry {
            prefix,
            next_hop: None,
            as_path: vec![asn],
            local_pref: DEFAULT_LOCAL_PREF,
            source: RouteSource::Originated,
            ebgp: false,
        }
    }
}

/// Number of inter-AS hops in a path; a leading own-AS entry marks a route
/// originated inside the AS and does not count.
pub fn external_path_len(path: &[AsNumber], own_as: AsNumber) -> usize {
    match path.first() {
        Some(&a) if a == own_as => path.len() - 1,
        _ => path.len(),
    }
}

/// Total preference order; `Less` means `a` is preferred.
pub fn compare_routes(a: &RibEntry, b: &RibEntry, own_as: AsNumber) -> Ordering {
    let originated = |r: &RibEntry| r.source != RouteSource::Originated;
    originated(a)
        .cmp(&originated(b))
        .then(b.local_pref.cmp(&a.local_pref))
        .then(external_path_len(&a.as_path, own_as).cmp(&external_path_len(&b.as_path, own_as)))
        .then(b.ebgp.cmp(&a.ebgp))
        .then(a.next_hop.cmp(&b.next_hop))
}

/// Picks the preferred route among candidates for one prefix.
pub fn best_path_select<'a, I>(candidates: I, own_as: AsNumber) -> Option<&'a RibEntry>
where
    I: IntoIterator<Item = &'a RibEntry>,
{
    candidates
        .into_iter()
        .min_by(|a, b| compare_routes(a, b, own_as))
}
