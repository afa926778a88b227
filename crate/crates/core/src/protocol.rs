//! The open-set partition of a labeled dataset.
//!
//! Identities are split by image count: more than three images makes a
//! *known* subject, two or three a *known unknown*, a single image an
//! *unknown unknown*. The three lowest-numbered images of every known subject
//! are enrolled and also used for training, the lowest-numbered image of every
//! known unknown is used for training, and everything else is a probe.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::feature::{Dataset, FeatureVector, GalleryTemplate, ImageKey, LabeledFeature};

/// Number of enrolled images per known subject.
pub const TEMPLATE_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum IdentityCategory {
    Known,
    KnownUnknown,
    UnknownUnknown,
}

impl IdentityCategory {
    pub fn from_image_count(count: usize) -> Self {
        match count {
            0 | 1 => IdentityCategory::UnknownUnknown,
            2 | 3 => IdentityCategory::KnownUnknown,
            _ => IdentityCategory::Known,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ProbeSetId {
    C,
    O1,
    O2,
    O3,
}

impl ProbeSetId {
    pub const ALL: [ProbeSetId; 4] = [ProbeSetId::C, ProbeSetId::O1, ProbeSetId::O2, ProbeSetId::O3];

    pub fn includes_known_unknowns(self) -> bool {
        matches!(self, ProbeSetId::O1 | ProbeSetId::O3)
    }

    pub fn includes_unknown_unknowns(self) -> bool {
        matches!(self, ProbeSetId::O2 | ProbeSetId::O3)
    }

    pub fn is_open(self) -> bool {
        self != ProbeSetId::C
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeSetId::C => "C",
            ProbeSetId::O1 => "O1",
            ProbeSetId::O2 => "O2",
            ProbeSetId::O3 => "O3",
        }
    }
}

impl fmt::Display for ProbeSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProbeSetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "C" | "c" => Ok(ProbeSetId::C),
            "O1" | "o1" => Ok(ProbeSetId::O1),
            "O2" | "o2" => Ok(ProbeSetId::O2),
            "O3" | "o3" => Ok(ProbeSetId::O3),
            other => Err(Error::invalid(format!("unknown probe set `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProtocolPartition {
    /// Training set: gallery images plus one image per known unknown.
    pub training: BTreeSet<ImageKey>,
    /// Enrolled image indices per known subject, ascending.
    pub gallery: BTreeMap<String, Vec<u32>>,
    /// Remaining images of known subjects.
    pub probes_known: BTreeSet<ImageKey>,
    /// Known-unknown images not used for training.
    pub probes_known_unknown: BTreeSet<ImageKey>,
    /// All images of unknown unknowns.
    pub probes_unknown_unknown: BTreeSet<ImageKey>,
}

pub fn categorize_identities(d: &Dataset) -> BTreeMap<String, IdentityCategory> {
    images_per_identity(d)
        .into_iter()
        .map(|(id, images)| (id, IdentityCategory::from_image_count(images.len())))
        .collect()
}

fn images_per_identity(d: &Dataset) -> BTreeMap<String, Vec<u32>> {
    let mut map: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for r in d.records() {
        map.entry(r.identity.clone()).or_default().push(r.image);
    }
    for images in map.values_mut() {
        images.sort_unstable();
    }
    map
}

pub fn build_partition(d: &Dataset) -> Result<ProtocolPartition> {
    let mut p = ProtocolPartition::default();
    for (identity, images) in images_per_identity(d) {
        let key = |image: u32| ImageKey::new(identity.clone(), image);
        match IdentityCategory::from_image_count(images.len()) {
            IdentityCategory::Known => {
                let (enrolled, rest) = images.split_at(TEMPLATE_SIZE);
                p.training.extend(enrolled.iter().map(|&i| key(i)));
                p.probes_known.extend(rest.iter().map(|&i| key(i)));
                p.gallery.insert(identity.clone(), enrolled.to_vec());
            }
            IdentityCategory::KnownUnknown => {
                p.training.insert(key(images[0]));
                p.probes_known_unknown.extend(images[1..].iter().map(|&i| key(i)));
            }
            IdentityCategory::UnknownUnknown => {
                p.probes_unknown_unknown.extend(images.iter().map(|&i| key(i)));
            }
        }
    }
    if p.gallery.is_empty() {
        return Err(Error::Protocol(String::from(
            "no identity has more than three images, the gallery would be empty",
        )));
    }
    Ok(p)
}

impl ProtocolPartition {
    pub fn probe_set(&self, id: ProbeSetId) -> BTreeSet<ImageKey> {
        let mut set = self.probes_known.clone();
        if id.includes_known_unknowns() {
            set.extend(self.probes_known_unknown.iter().cloned());
        }
        if id.includes_unknown_unknowns() {
            set.extend(self.probes_unknown_unknown.iter().cloned());
        }
        set
    }

    /// Unknown probes (K and/or U) that belong to `id`.
    pub fn unknown_keys(&self, id: ProbeSetId) -> BTreeSet<ImageKey> {
        let mut set = BTreeSet::new();
        if id.includes_known_unknowns() {
            set.extend(self.probes_known_unknown.iter().cloned());
        }
        if id.includes_unknown_unknowns() {
            set.extend(self.probes_unknown_unknown.iter().cloned());
        }
        set
    }

    pub fn gallery_keys(&self) -> impl Iterator<Item = ImageKey> + '_ {
        self.gallery
            .iter()
            .flat_map(|(id, images)| images.iter().map(move |&i| ImageKey::new(id.clone(), i)))
    }

    pub fn is_gallery_subject(&self, identity: &str) -> bool {
        self.gallery.contains_key(identity)
    }

    /// Gallery templates in subject order.
    pub fn gallery_templates(&self, d: &Dataset) -> Result<Vec<GalleryTemplate>> {
        self.gallery
            .iter()
            .map(|(id, images)| {
                let features: Vec<FeatureVector> = images
                    .iter()
                    .map(|&i| {
                        let key = ImageKey::new(id.clone(), i);
                        d.get(&key)
                            .map(|r| r.feature.clone())
                            .ok_or_else(|| Error::invalid(format!("gallery image {key} missing from dataset")))
                    })
                    .collect::<Result<_>>()?;
                GalleryTemplate::new(id.clone(), features)
            })
            .collect()
    }

    pub fn training_records(&self, d: &Dataset) -> Result<Vec<LabeledFeature>> {
        d.select(&self.training)
    }

    pub fn probe_records(&self, d: &Dataset, id: ProbeSetId) -> Result<Vec<LabeledFeature>> {
        d.select(&self.probe_set(id))
    }

    /// Class labels for discriminant training: one class per gallery subject
    /// (in subject order) and one shared class for every known unknown.
    pub fn training_classes(&self, d: &Dataset) -> Result<(Vec<usize>, Vec<FeatureVector>)> {
        let subject_class: BTreeMap<&str, usize> =
            self.gallery.keys().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let unknown_class = subject_class.len();
        let records = self.training_records(d)?;
        let labels = records
            .iter()
            .map(|r| subject_class.get(r.identity.as_str()).copied().unwrap_or(unknown_class))
            .collect();
        Ok((labels, records.into_iter().map(|r| r.feature).collect()))
    }
}
