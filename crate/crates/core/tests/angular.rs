mod common;

use std::f64::consts::PI;

use common::rng;
use nlsam::angular::{
    all_subsets, angular_distance, find_neighbors, greedy_set_cover, hemisphere_directions, AngularSubset,
};
use nlsam::volume::GradientTable;
use proptest::prelude::*;
use rand::Rng;

fn table(dirs: &[[f64; 3]], bvals: &[f64]) -> GradientTable {
    let mut v = vec![[0.0; 3]];
    v.extend_from_slice(dirs);
    let mut b = vec![0.0];
    b.extend_from_slice(bvals);
    GradientTable::new(b, v, 50.0).unwrap()
}

fn shell(n: usize) -> GradientTable {
    table(&hemisphere_directions(n), &vec![1000.0; n])
}

/// Smallest number of subsets covering every DWI, by exhaustive search.
fn brute_force_cover(subsets: &[AngularSubset], dwis: &[usize]) -> usize {
    let n = subsets.len();
    let mut best = usize::MAX;
    for bits in 1u32..(1 << n) {
        let count = bits.count_ones() as usize;
        if count >= best {
            continue;
        }
        let covers = dwis.iter().all(|d| (0..n).any(|i| bits & (1 << i) != 0 && subsets[i].dwis().contains(d)));
        if covers {
            best = count;
        }
    }
    best
}

fn covered(subsets: &[AngularSubset], chosen: &[usize], dwis: &[usize]) -> bool {
    dwis.iter().all(|d| chosen.iter().any(|&i| subsets[i].dwis().contains(d)))
}

#[test]
fn distance_values() {
    let g = [0.3, -0.4, 0.5];
    assert!(angular_distance(g, [-0.3, 0.4, -0.5]).unwrap().abs() < 1e-7);
    assert!((angular_distance([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]).unwrap() - PI / 2.0).abs() < 1e-12);
    let d = angular_distance([1.0, 0.0, 0.0], [3f64.sqrt() / 2.0, 0.5, 0.0]).unwrap();
    assert!((d - PI / 6.0).abs() < 1e-12);
    assert!(angular_distance([0.0; 3], [1.0, 0.0, 0.0]).is_err());
}

#[test]
fn neighbors_of_six_directions_match_exhaustive_ranking() {
    // icosahedron axes: all pairwise angles equal, so ties fall to index order
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let dirs =
        [[0.0, 1.0, phi], [0.0, -1.0, phi], [1.0, phi, 0.0], [-1.0, phi, 0.0], [phi, 0.0, 1.0], [-phi, 0.0, 1.0]];
    let t = table(&dirs, &[1000.0; 6]);
    for target in 1..=6 {
        let s = find_neighbors(&t, target, 4).unwrap();
        let mut ranked: Vec<(f64, usize)> = (1..=6)
            .filter(|&j| j != target)
            .map(|j| (angular_distance(t.bvecs()[target], t.bvecs()[j]).unwrap(), j))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<usize> = ranked.iter().take(4).map(|p| p.1).collect();
        assert_eq!(&s.members()[2..], want.as_slice(), "target {target}");
        assert_eq!(s.members()[..2], [0, target]);
    }
}

#[test]
fn all_others_when_an_is_maximal() {
    let t = shell(7);
    let s = find_neighbors(&t, 3, 6).unwrap();
    let mut others = s.members()[2..].to_vec();
    others.sort();
    assert_eq!(others, vec![1, 2, 4, 5, 6, 7]);
    assert!(find_neighbors(&t, 3, 7).is_err());
}

#[test]
fn search_spans_shells() {
    let dirs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.7, 0.7, 0.0]];
    let t = table(&dirs, &[1000.0, 1000.0, 1000.0, 3000.0, 3000.0]);
    let s = find_neighbors(&t, 1, 2).unwrap();
    assert_eq!(&s.members()[2..], &[4, 5]);
}

#[test]
fn full_family_targets_every_dwi_once() {
    let t = shell(30);
    let subsets = all_subsets(&t, 4).unwrap();
    let targets: Vec<usize> = subsets.iter().map(|s| s.target()).collect();
    assert_eq!(targets, t.dwi_indices());
    for s in &subsets {
        let mut m = s.members().to_vec();
        m.sort();
        m.dedup();
        assert_eq!(m.len(), 6);
        assert_eq!(s.b0(), 0);
    }
}

#[test]
fn cover_of_disjoint_groups_is_minimal() {
    let mut r = rng(1);
    for _ in 0..50 {
        // DWIs split into groups of an+1 whose subsets each cover their group
        let an = r.random_range(1..4);
        let groups = r.random_range(1..=10 / (an + 1));
        let n = groups * (an + 1);
        let mut order: Vec<usize> = (1..=n).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, r.random_range(0..=i));
        }
        let mut subsets = Vec::new();
        for g in order.chunks(an + 1) {
            for &target in g {
                let mut members = vec![0, target];
                members.extend(g.iter().filter(|&&d| d != target));
                subsets.push(AngularSubset::new(target, members).unwrap());
            }
        }
        subsets.sort_by_key(|s| s.target());
        let dwis: Vec<usize> = (1..=n).collect();
        let chosen = greedy_set_cover(&subsets);
        assert!(covered(&subsets, &chosen, &dwis));
        assert_eq!(chosen.len(), brute_force_cover(&subsets, &dwis));
        assert_eq!(chosen.len(), groups);
    }
}

#[test]
fn cover_is_near_minimal_on_random_families() {
    let mut r = rng(2);
    for _ in 0..40 {
        let n = r.random_range(3..=10);
        let an = r.random_range(1..n.min(4));
        let subsets: Vec<AngularSubset> = (1..=n)
            .map(|target| {
                let mut others: Vec<usize> = (1..=n).filter(|&d| d != target).collect();
                for i in (1..others.len()).rev() {
                    others.swap(i, r.random_range(0..=i));
                }
                let mut members = vec![0, target];
                members.extend(&others[..an]);
                AngularSubset::new(target, members).unwrap()
            })
            .collect();
        let dwis: Vec<usize> = (1..=n).collect();
        let chosen = greedy_set_cover(&subsets);
        assert!(covered(&subsets, &chosen, &dwis));
        let best = brute_force_cover(&subsets, &dwis);
        // greedy guarantee: within the harmonic number of the largest subset
        let h: f64 = (1..=an + 1).map(|k| 1.0 / k as f64).sum();
        assert!(chosen.len() >= best && chosen.len() as f64 <= h * best as f64 + 1e-9, "{} vs {best}", chosen.len());
    }
}

#[test]
fn one_subset_when_each_covers_everything() {
    let t = shell(5);
    let subsets = all_subsets(&t, 4).unwrap();
    assert_eq!(greedy_set_cover(&subsets), vec![0]);
}

#[test]
fn fast_mode_selects_fewer_subsets_on_64_directions() {
    let t = shell(64);
    let subsets = all_subsets(&t, 4).unwrap();
    let chosen = greedy_set_cover(&subsets);
    assert!(chosen.len() < subsets.len());
    assert!(chosen.len() <= 32, "{}", chosen.len());
    assert!(covered(&subsets, &chosen, &t.dwi_indices()));
    let mut unique = chosen.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), chosen.len());
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distance_is_a_projective_pseudometric(
        a in prop::array::uniform3(-1.0f64..1.0),
        b in prop::array::uniform3(-1.0f64..1.0),
        c in prop::array::uniform3(-1.0f64..1.0),
    ) {
        prop_assume!([a, b, c].iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3));
        let (a, b, c) = (unit(a), unit(b), unit(c));
        let ab = angular_distance(a, b).unwrap();
        let bc = angular_distance(b, c).unwrap();
        let ac = angular_distance(a, c).unwrap();
        prop_assert!((ab - angular_distance(b, a).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=PI / 2.0 + 1e-12).contains(&ab));
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!((angular_distance(a, [-b[0], -b[1], -b[2]]).unwrap() - ab).abs() < 1e-9);
    }
}
