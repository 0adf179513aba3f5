//! SWC and volume round trips, forest components and terminals.

use std::collections::BTreeSet;

use neurite_recon::swc::*;
use neurite_recon::union_find::DisjointSet;
use neurite_recon::volume::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random forest with shuffled distinct ids; parents precede children.
fn random_forest(rng: &mut ChaCha8Rng, len: usize) -> SwcForest {
    let mut ids: Vec<u64> = (1..=len as u64 * 3).collect();
    for i in (1..ids.len()).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let mut nodes: Vec<SwcNode> = Vec::with_capacity(len);
    for k in 0..len {
        let parent = if k == 0 || rng.random_bool(0.1) {
            None
        } else {
            Some(nodes[rng.random_range(0..k)].id)
        };
        let mut n = SwcNode::new(
            ids[k],
            [
                rng.random_range(-1e3..1e3),
                rng.random::<f64>() * 100.0,
                rng.random_range(-1.0..1.0) * 1e-7,
            ],
            rng.random_range(0.0..10.0),
            parent,
        );
        n.type_code = rng.random_range(0..8);
        nodes.push(n);
    }
    SwcForest::new(nodes).unwrap()
}

#[test]
fn swc_parse_write_identity_on_generated_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for k in 0..200 {
        let f = random_forest(&mut rng, 1 + k % 60);
        let text = write_swc(&f);
        let back = parse_swc(text.as_bytes()).unwrap();
        assert_eq!(back, f, "file {k}");
        assert_eq!(write_swc(&back), text);
    }
}

#[test]
fn swc_rejects_structural_errors() {
    assert!(matches!(
        parse_swc(b"1 0 0 0 0 1 -1\n1 0 1 0 0 1 1\n"),
        Err(SwcError::DuplicateId { id: 1, .. })
    ));
    assert!(matches!(
        parse_swc(b"1 0 0 0 0 1 7\n"),
        Err(SwcError::DanglingParent { parent: 7, .. })
    ));
    assert!(matches!(
        parse_swc(b"1 0 0 0 0 1 2\n2 0 0 0 0 1 1\n"),
        Err(SwcError::CycleDetected { .. })
    ));
    assert!(matches!(parse_swc(b"1 0 0 x 0 1 -1\n"), Err(SwcError::MalformedLine { line: 1, .. })));
}

proptest! {
    #[test]
    fn components_partition_and_match_union_find(seed in 0u64..10_000, len in 1usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_forest(&mut rng, len);
        let groups = forest_components(&f);
        let mut seen = BTreeSet::new();
        for g in &groups {
            for &id in g {
                prop_assert!(seen.insert(id));
            }
        }
        prop_assert_eq!(seen.len(), f.len());

        let pos: std::collections::HashMap<u64, usize> =
            f.nodes().iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut ds = DisjointSet::new(f.len());
        for n in f.nodes() {
            if let Some(p) = n.parent {
                ds.union(pos[&n.id], pos[&p]);
            }
        }
        let roots: BTreeSet<usize> = (0..f.len()).map(|i| ds.find(i)).collect();
        prop_assert_eq!(roots.len(), groups.len());
        for g in &groups {
            let r = ds.find(pos[&g[0]]);
            prop_assert!(g.iter().all(|id| ds.find(pos[id]) == r));
        }
    }

    #[test]
    fn terminals_grow_with_margin(seed in 0u64..10_000, m1 in 0.0f64..50.0, dm in 0.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_forest(&mut rng, 40);
        let b = Aabb::enclosing([&f]).unwrap();
        let a: BTreeSet<u64> = terminals(&f, &b, m1).unwrap().into_iter().collect();
        let c: BTreeSet<u64> = terminals(&f, &b, m1 + dm).unwrap().into_iter().collect();
        prop_assert!(a.is_subset(&c));
    }

    #[test]
    fn neighbors26_is_symmetric(d in 1usize..5, h in 1usize..5, w in 1usize..5, seed in 0usize..1000) {
        let dims = GridDims::isotropic(d, h, w);
        let i = seed % dims.len();
        for j in neighbors26(&dims, i) {
            prop_assert!(neighbors26(&dims, j).contains(&i));
        }
    }
}

#[test]
fn rasterization_is_the_union_of_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dims = GridDims::new(16, 18, 20, [1.0, 0.8, 1.2]).unwrap();
    for _ in 0..10 {
        let mut nodes = Vec::new();
        for k in 0..12u64 {
            let parent = (k > 0 && rng.random_bool(0.8)).then(|| rng.random_range(1..=k));
            nodes.push(SwcNode::new(
                k + 1,
                [rng.random_range(0.0..24.0), rng.random_range(0.0..14.0), rng.random_range(0.0..16.0)],
                rng.random_range(0.3..2.5),
                parent,
            ));
        }
        let f = SwcForest::new(nodes).unwrap();
        let (labels, _) = rasterize(&f, &dims, false);
        let mut union = BTreeSet::new();
        let mut buf = Vec::new();
        for n in f.nodes() {
            buf.clear();
            match n.parent {
                Some(p) => edge_voxels(&dims, f.get(p).unwrap(), n, &mut buf),
                None if f.children(n.id).is_empty() => sphere_voxels(&dims, n.pos(), n.radius, &mut buf),
                None => {}
            }
            union.extend(buf.iter().copied());
        }
        let got: BTreeSet<usize> = (0..dims.len()).filter(|&i| labels.labels[i] != 0).collect();
        assert_eq!(got, union);
    }
}

fn round_trip(vol: Volume, name: &str) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(name);
    write_volume(&vol, &path, None).unwrap();
    let payload = std::fs::read(path.with_extension("raw")).unwrap();
    let back = read_volume(&path).unwrap();
    assert_eq!(back.dims(), vol.dims());
    assert_eq!(back.kind(), vol.kind());
    let path2 = dir.path().join(format!("again_{name}"));
    write_volume(&back, &path2, None).unwrap();
    assert_eq!(std::fs::read(path2.with_extension("raw")).unwrap(), payload);
    let sc = read_sidecar(&path).unwrap();
    assert_eq!(sc.dims, [vol.dims().d, vol.dims().h, vol.dims().w]);
}

#[test]
fn volume_round_trip_is_byte_exact_for_every_dtype() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dims = GridDims::new(16, 16, 16, [1.0, 0.5, 0.25]).unwrap();
    let mask = VoxelMask::new(dims, (0..dims.len()).map(|_| rng.random_bool(0.3)).collect()).unwrap();
    let labels = LabelVolume::new(dims, (0..dims.len()).map(|_| rng.random::<u32>()).collect()).unwrap();
    let field = EmbeddingField::<f32>::from_voxel_major(
        dims,
        8,
        (0..dims.len() * 8).map(|_| rng.random_range(-1e3f32..1e3)).collect(),
    )
    .unwrap();

    round_trip(mask.clone().into(), "mask.json");
    round_trip(labels.clone().into(), "labels.json");
    round_trip(field.clone().into(), "field.json");

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.json");
    write_volume(&field.clone().into(), &p, None).unwrap();
    let back = read_volume(&p).unwrap().into_field().unwrap();
    let a: Vec<u32> = back.values().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u32> = field.values().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
    let p = dir.path().join("l.json");
    write_volume(&labels.clone().into(), &p, None).unwrap();
    assert_eq!(read_volume(&p).unwrap().into_labels().unwrap(), labels);
    let p = dir.path().join("m.json");
    write_volume(&mask.clone().into(), &p, None).unwrap();
    assert_eq!(read_volume(&p).unwrap().into_mask().unwrap(), mask);
}
