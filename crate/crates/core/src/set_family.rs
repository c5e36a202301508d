//! Subsets of `M = {1..m}` as bitmasks, and upward-closed families of
//! nonempty subsets.
//!
//! Coordinate `j` (1-based) lives in bit `j − 1`. Families are kept sorted by
//! `(popcount, bits)` so that printed output is reproducible.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 16;

/// Largest dimension accepted by [`enumerate_monotone_families`].
pub const MAX_ENUM_DIM: usize = 5;

pub(crate) fn check_dim(m: usize) -> Result<()> {
    if (2..=MAX_DIM).contains(&m) {
        Ok(())
    } else {
        Err(Error::DimensionOutOfRange(m))
    }
}

#[inline]
pub(crate) fn full_bits(m: usize) -> u32 {
    if m >= 32 {
        u32::MAX
    } else {
        (1u32 << m) - 1
    }
}

/// A subset `U ⊆ {1..m}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SubsetMask {
    bits: u32,
    m: u8,
}

impl SubsetMask {
    pub fn new(bits: u32, m: usize) -> Result<Self> {
        check_dim(m)?;
        if bits > full_bits(m) {
            return Err(Error::SubsetOutOfRange { bits, m });
        }
        Ok(SubsetMask { bits, m: m as u8 })
    }

    pub fn empty(m: usize) -> Result<Self> {
        Self::new(0, m)
    }

    /// The whole index set `M`.
    pub fn full(m: usize) -> Result<Self> {
        check_dim(m)?;
        Ok(SubsetMask { bits: full_bits(m), m: m as u8 })
    }

    /// Builds a subset from 1-based coordinates. Duplicates are ignored.
    pub fn from_coords(coords: &[usize], m: usize) -> Result<Self> {
        check_dim(m)?;
        let mut bits = 0u32;
        for &c in coords {
            if c == 0 || c > m {
                return Err(Error::Parse(format!("coordinate {c} outside 1..={m}")));
            }
            bits |= 1 << (c - 1);
        }
        Ok(SubsetMask { bits, m: m as u8 })
    }

    /// Parses `"{1,3}"`, `"1,3"`, `"[1,3]"`, `"{}"` or `""`.
    pub fn parse(text: &str, m: usize) -> Result<Self> {
        let t = text.trim();
        let inner = t
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .or_else(|| t.strip_prefix('[').and_then(|s| s.strip_suffix(']')))
            .unwrap_or(t);
        let mut coords = Vec::new();
        for part in inner.split(',') {
            let p = part.trim();
            if p.is_empty() {
                continue;
            }
            let c: usize = p
                .parse()
                .map_err(|_| Error::Parse(format!("bad coordinate {p:?} in subset {text:?}")))?;
            coords.push(c);
        }
        Self::from_coords(&coords, m)
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn dim(self) -> usize {
        self.m as usize
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn contains(self, coord: usize) -> bool {
        coord >= 1 && coord <= self.dim() && self.bits & (1 << (coord - 1)) != 0
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(self, other: SubsetMask) -> bool {
        self.bits & !other.bits == 0
    }

    pub fn complement(self) -> SubsetMask {
        SubsetMask { bits: full_bits(self.dim()) & !self.bits, m: self.m }
    }

    pub fn union(self, other: SubsetMask) -> SubsetMask {
        SubsetMask { bits: self.bits | other.bits, m: self.m }
    }

    /// 1-based coordinates in increasing order.
    pub fn coords(self) -> Vec<usize> {
        (1..=self.dim()).filter(|&c| self.contains(c)).collect()
    }

    /// 0-based indices in increasing order.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let bits = self.bits;
        (0..self.dim()).filter(move |&j| bits & (1 << j) != 0)
    }

    fn sort_key(self) -> (u32, u32) {
        (self.bits.count_ones(), self.bits)
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords().iter().map(|c| c.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl PartialOrd for SubsetMask {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SubsetMask {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.m, self.sort_key()).cmp(&(other.m, other.sort_key()))
    }
}

/// An upward-closed family of nonempty subsets of `{1..m}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MonotoneFamily {
    m: usize,
    members: Vec<SubsetMask>,
}

fn validate_masks(masks: &[SubsetMask], m: usize) -> Result<()> {
    check_dim(m)?;
    for mask in masks {
        if mask.dim() != m {
            return Err(Error::DimensionMismatch { expected: m, got: mask.dim() });
        }
    }
    Ok(())
}

fn upward_closed(set: &BTreeSet<u32>, m: usize) -> bool {
    set.iter().all(|&u| (0..m).all(|j| set.contains(&(u | (1 << j)))))
}

/// True iff `masks` (as a set) is upward-closed and free of the empty subset.
pub fn is_monotone(masks: &[SubsetMask], m: usize) -> Result<bool> {
    validate_masks(masks, m)?;
    if masks.iter().any(|u| u.is_empty()) {
        return Ok(false);
    }
    let set: BTreeSet<u32> = masks.iter().map(|u| u.bits()).collect();
    Ok(upward_closed(&set, m))
}

/// Smallest upward-closed family containing `generators`.
pub fn upward_closure(generators: &[SubsetMask], m: usize) -> Result<MonotoneFamily> {
    validate_masks(generators, m)?;
    if generators.iter().any(|u| u.is_empty()) {
        return Err(Error::EmptySubset);
    }
    let full = full_bits(m);
    let gens: Vec<u32> = generators.iter().map(|u| u.bits()).collect();
    let members = (1..=full)
        .filter(|&w| gens.iter().any(|&g| g & !w == 0))
        .map(|bits| SubsetMask { bits, m: m as u8 })
        .collect();
    Ok(MonotoneFamily::from_masks(members, m))
}

/// `{M} ∪ {M∖{u} : u ∉ V}`, the boundary family of the empirical process with
/// known margins indexed by `V`.
pub fn family_for_known_margins(v: SubsetMask, m: usize) -> Result<MonotoneFamily> {
    check_dim(m)?;
    if v.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: v.dim() });
    }
    let full = full_bits(m);
    let mut members = vec![SubsetMask { bits: full, m: m as u8 }];
    for j in 0..m {
        if v.bits() & (1 << j) == 0 {
            members.push(SubsetMask { bits: full & !(1 << j), m: m as u8 });
        }
    }
    Ok(MonotoneFamily::from_masks(members, m))
}

/// All upward-closed families of nonempty subsets of `{1..m}`, `m <= 5`,
/// ordered by size and then lexicographically by members.
pub fn enumerate_monotone_families(m: usize) -> Result<Vec<MonotoneFamily>> {
    check_dim(m)?;
    if m > MAX_ENUM_DIM {
        return Err(Error::EnumerationTooLarge(m));
    }
    let full = full_bits(m);
    // Supersets are decided before their subsets.
    let mut order: Vec<u32> = (1..=full).collect();
    order.sort_by_key(|&u| (std::cmp::Reverse(u.count_ones()), u));

    fn recurse(order: &[u32], idx: usize, chosen: u64, m: usize, out: &mut Vec<u64>) {
        if idx == order.len() {
            out.push(chosen);
            return;
        }
        let u = order[idx];
        recurse(order, idx + 1, chosen, m, out);
        let supersets_in = (0..m)
            .filter(|&j| u & (1 << j) == 0)
            .all(|j| chosen & (1u64 << (u | (1 << j))) != 0);
        if supersets_in {
            recurse(order, idx + 1, chosen | (1u64 << u), m, out);
        }
    }

    let mut raw = Vec::new();
    recurse(&order, 0, 0, m, &mut raw);
    let mut families: Vec<MonotoneFamily> = raw
        .into_iter()
        .map(|set| {
            let members = (1..=full)
                .filter(|&u| set & (1u64 << u) != 0)
                .map(|bits| SubsetMask { bits, m: m as u8 })
                .collect();
            MonotoneFamily::from_masks(members, m)
        })
        .collect();
    families.sort_by(|a, b| (a.len(), &a.members).cmp(&(b.len(), &b.members)));
    Ok(families)
}

impl MonotoneFamily {
    fn from_masks(mut members: Vec<SubsetMask>, m: usize) -> Self {
        members.sort();
        members.dedup();
        MonotoneFamily { m, members }
    }

    /// Validates that `masks` already form an upward-closed family.
    pub fn new(masks: Vec<SubsetMask>, m: usize) -> Result<Self> {
        validate_masks(&masks, m)?;
        if masks.iter().any(|u| u.is_empty()) {
            return Err(Error::EmptySubset);
        }
        if !is_monotone(&masks, m)? {
            let set: BTreeSet<u32> = masks.iter().map(|u| u.bits()).collect();
            let missing = masks
                .iter()
                .flat_map(|u| (0..m).map(move |j| u.bits() | (1 << j)))
                .find(|w| !set.contains(w))
                .map(|w| SubsetMask { bits: w, m: m as u8 }.to_string())
                .unwrap_or_default();
            return Err(Error::NotMonotone(format!("missing overset {missing}")));
        }
        Ok(Self::from_masks(masks, m))
    }

    /// The family with no members (no conditions on the right faces).
    pub fn empty(m: usize) -> Result<Self> {
        check_dim(m)?;
        Ok(MonotoneFamily { m, members: Vec::new() })
    }

    /// `{M}`: vanishing at the corner `(1, …, 1)` only.
    pub fn top(m: usize) -> Result<Self> {
        Ok(MonotoneFamily { m, members: vec![SubsetMask::full(m)?] })
    }

    /// All nonempty subsets: vanishing on every right face.
    pub fn all_nonempty(m: usize) -> Result<Self> {
        check_dim(m)?;
        let members = (1..=full_bits(m)).map(|bits| SubsetMask { bits, m: m as u8 }).collect();
        Ok(Self::from_masks(members, m))
    }

    /// Parses a family from a JSON array of arrays (`[[1,2],[1]]`), a bracketed
    /// list of braces (`[{1,2},{1}]`) or a bare list of braces. The result must
    /// already be upward-closed.
    pub fn parse(text: &str, m: usize) -> Result<Self> {
        let masks = parse_mask_list(text, m)?;
        Self::new(masks, m)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn members(&self) -> &[SubsetMask] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, u: SubsetMask) -> bool {
        self.members.binary_search(&u).is_ok()
    }

    /// Members as lists of 1-based coordinates.
    pub fn to_coord_lists(&self) -> Vec<Vec<usize>> {
        self.members.iter().map(|u| u.coords()).collect()
    }
}

impl fmt::Display for MonotoneFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.members.iter().map(|u| u.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Parses a list of subsets in any of the accepted text forms, without
/// checking monotonicity.
pub fn parse_mask_list(text: &str, m: usize) -> Result<Vec<SubsetMask>> {
    check_dim(m)?;
    let t = text.trim();
    if let Ok(lists) = serde_json::from_str::<Vec<Vec<usize>>>(t) {
        return lists.iter().map(|c| SubsetMask::from_coords(c, m)).collect();
    }
    let body = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')).unwrap_or(t);
    let mut out = Vec::new();
    let mut rest = body;
    loop {
        rest = rest.trim_start_matches(|c: char| c == ',' || c.is_whitespace());
        if rest.is_empty() {
            break;
        }
        if !rest.starts_with('{') {
            return Err(Error::Parse(format!("expected '{{' in family {text:?}")));
        }
        let close = rest
            .find('}')
            .ok_or_else(|| Error::Parse(format!("unterminated subset in family {text:?}")))?;
        out.push(SubsetMask::parse(&rest[..=close], m)?);
        rest = &rest[close + 1..];
    }
    Ok(out)
}
