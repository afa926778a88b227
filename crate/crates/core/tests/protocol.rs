use std::collections::BTreeSet;

use openset_core::protocol::TEMPLATE_SIZE;
use openset_core::{
    build_partition, categorize_identities, Dataset, IdentityCategory, ImageKey, LabeledFeature, ProbeSetId,
};
use proptest::prelude::*;

fn dataset(counts: &[(String, Vec<u32>)]) -> Dataset {
    let mut recs = vec![];
    for (n, (id, images)) in counts.iter().enumerate() {
        for &i in images {
            recs.push(LabeledFeature::new(id.clone(), i, vec![1.0 + n as f64, i as f64]));
        }
    }
    Dataset::new(recs).unwrap()
}

fn identities() -> impl Strategy<Value = Vec<(String, Vec<u32>)>> {
    prop::collection::btree_map("[a-z]{1,4}", prop::collection::btree_set(1u32..40, 1..8), 1..12)
        .prop_map(|m| m.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect())
}

proptest! {
    #[test]
    fn partition_invariants(ids in identities(), seed in 0u64..1000) {
        prop_assume!(ids.iter().any(|(_, v)| v.len() > 3));
        let d = dataset(&ids);
        let p = build_partition(&d).unwrap();

        // Any record order gives the same partition.
        let mut shuffled = d.records().to_vec();
        let k = (seed as usize) % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        prop_assert_eq!(&build_partition(&Dataset::new(shuffled).unwrap()).unwrap(), &p);

        let cats = categorize_identities(&d);
        for (id, images) in &ids {
            let mut sorted = images.clone();
            sorted.sort();
            match cats[id] {
                IdentityCategory::Known => {
                    prop_assert_eq!(&p.gallery[id], &sorted[..TEMPLATE_SIZE].to_vec());
                }
                _ => prop_assert!(!p.gallery.contains_key(id)),
            }
        }
        let u_ids: BTreeSet<&str> = p.probes_unknown_unknown.iter().map(|k| k.identity.as_str()).collect();
        prop_assert!(p.training.iter().all(|k| !u_ids.contains(k.identity.as_str())));
        prop_assert!(p.gallery.keys().all(|g| !u_ids.contains(g.as_str())));
        prop_assert!(p.probes_known.is_disjoint(&p.training));
        prop_assert!(p.probes_known.is_disjoint(&p.probes_known_unknown));
        prop_assert!(p.probes_known_unknown.is_disjoint(&p.probes_unknown_unknown));
        prop_assert!(p.probes_known.is_disjoint(&p.probes_unknown_unknown));
        let gallery: BTreeSet<ImageKey> = p.gallery_keys().collect();
        prop_assert!(gallery.is_subset(&p.training));

        let total = p.training.len() + p.probes_known.len() + p.probes_known_unknown.len() + p.probes_unknown_unknown.len();
        prop_assert_eq!(total, d.len());
        let o1 = p.probe_set(ProbeSetId::O1);
        let o2 = p.probe_set(ProbeSetId::O2);
        let o3 = p.probe_set(ProbeSetId::O3);
        let c = p.probe_set(ProbeSetId::C);
        prop_assert_eq!(&o1.union(&o2).cloned().collect::<BTreeSet<_>>(), &o3);
        prop_assert!(c.is_subset(&o1) && c.is_subset(&o2));
        prop_assert_eq!(o3.len(), p.probes_known.len() + p.probes_known_unknown.len() + p.probes_unknown_unknown.len());
    }
}
