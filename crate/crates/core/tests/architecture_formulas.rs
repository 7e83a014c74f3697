mod common;

use common::{dense_instance as dense, rng, sparse_instance};
use rand::Rng;
use sls_deploy::architecture::{
    build_centralized, build_global_state, build_memory_conservative, build_naive_distributed,
    build_original_centralized, cost_report, ArchitectureGraph, Component, NodeKind, PartSource,
};

struct Formulas {
    eq8: usize,
    eq9: usize,
    eq10: usize,
    eq11: usize,
    eq12: usize,
    orig_mults: usize,
    orig_memory: usize,
}

fn formulas(nx: usize, nu: usize, t: usize) -> Formulas {
    Formulas {
        eq8: nx * nx + nx * nu + t * nx * nu,
        eq9: nx * nx + nx * nu + 2 * nx + t * nx * nu + (t + 1) * nx + nu,
        eq10: nx * nx + nx * nu + t * nx * nu,
        eq11: (t + 1) * nx * nu + nx * nx + 4 * nx + nu,
        eq12: 2 * nx * nu + nx * nx + (t + 3) * nx + nu,
        orig_mults: (t - 1) * nx * nx + t * nx * nu,
        orig_memory: (t - 1) * nx * nx + t * nx * nu + (t + 2) * nx + nu,
    }
}

#[test]
fn dense_counts_reproduce_closed_forms_on_grid() {
    for nx in 1..=6 {
        for nu in 1..=4 {
            for t in 1..=6 {
                let (sys, resp) = dense((nx * 100 + nu * 10 + t) as u64, nx, nu, t);
                let f = formulas(nx, nu, t);
                let pu = resp.phi_u_blocks();
                let at = format!("Nx={nx} Nu={nu} T={t}");

                let c = cost_report(&build_centralized(&sys, pu).unwrap()).unwrap();
                assert_eq!(c.dense.mults_per_step, f.eq8, "{at}");
                assert_eq!(c.dense.memory_scalars, f.eq9, "{at}");
                assert_eq!(c.dense.comm_scalars_per_step, nx + nu, "{at}");

                let o = cost_report(&build_original_centralized(&sys, &resp).unwrap()).unwrap();
                assert_eq!(o.dense.mults_per_step, f.orig_mults, "{at}");
                assert_eq!(o.dense.memory_scalars, f.orig_memory, "{at}");

                let g = cost_report(&build_global_state(&sys, pu).unwrap()).unwrap();
                let n = cost_report(&build_naive_distributed(&sys, pu).unwrap()).unwrap();
                let m = cost_report(&build_memory_conservative(&sys, pu).unwrap()).unwrap();
                for rep in [&g, &n, &m] {
                    assert_eq!(rep.dense.multiplier_scalars, f.eq10, "{at} {}", rep.architecture);
                    assert_eq!(rep.dense.mults_per_step, f.eq10, "{at} {}", rep.architecture);
                }
                assert_eq!(n.dense.buffer_scalars, f.eq11, "{at}");
                assert_eq!(m.dense.buffer_scalars, f.eq12, "{at}");
                assert_eq!(g.dense.memory_scalars, f.eq10 + f.eq11 + nx, "{at}");
                assert_eq!(n.dense.memory_scalars, f.eq10 + f.eq11, "{at}");
                assert_eq!(m.dense.memory_scalars, f.eq10 + f.eq12, "{at}");
                assert_eq!(n.dense.buffer_scalars - m.dense.buffer_scalars, (t - 1) * nx * (nu - 1), "{at}");

                // Dense inputs have no zeros, so both flavors agree.
                for rep in [&c, &o, &g, &n, &m] {
                    assert_eq!(rep.dense, rep.nnz, "{at} {}", rep.architecture);
                }
            }
        }
    }
}

#[test]
fn per_node_counts_follow_itemized_layout() {
    let (nx, nu, t) = (3, 2, 5);
    let (sys, resp) = dense(42, nx, nu, t);
    let pu = resp.phi_u_blocks();
    let check = |g: &ArchitectureGraph, sensor: usize, actuator: usize, hub: usize| {
        let rep = cost_report(g).unwrap();
        for (node, cost) in g.nodes.iter().zip(&rep.per_node) {
            let expect = match node.kind {
                NodeKind::Sensor(_) => sensor,
                NodeKind::Actuator(_) => actuator,
                _ => hub,
            };
            assert_eq!(cost.dense.buffer_scalars, expect, "{} {}", g.architecture, node.name);
        }
    };
    check(&build_naive_distributed(&sys, pu).unwrap(), nx + 4, (t + 1) * nx + 1, 0);
    check(&build_global_state(&sys, pu).unwrap(), nx + 4, (t + 1) * nx + 1, nx);
    check(&build_memory_conservative(&sys, pu).unwrap(), nx + nu + t + 3, nx + 1, 0);
    check(&build_centralized(&sys, pu).unwrap(), 0, 0, (t + 1) * nx + 2 * nx + nu);
}

#[test]
fn centralized_economy_region() {
    for nx in 1..=6 {
        for nu in 1..=4 {
            for t in 1..=6 {
                let (sys, resp) = dense(7 + (nx * 100 + nu * 10 + t) as u64, nx, nu, t);
                let new = cost_report(&build_centralized(&sys, resp.phi_u_blocks()).unwrap()).unwrap();
                let old = cost_report(&build_original_centralized(&sys, &resp).unwrap()).unwrap();
                let (nxi, nui, ti) = (nx as i64, nu as i64, t as i64);
                let mem_diff = new.dense.memory_scalars as i64 - old.dense.memory_scalars as i64;
                let mult_diff = new.dense.mults_per_step as i64 - old.dense.mults_per_step as i64;
                assert_eq!(mem_diff, nxi * (nui + 1 - (ti - 2) * nxi));
                assert_eq!(mult_diff, nxi * (nui - (ti - 2) * nxi));
                if nx >= nu && nx >= 2 && t > 3 {
                    assert!(mem_diff < 0 && mult_diff < 0, "Nx={nx} Nu={nu} T={t}");
                }
            }
        }
    }
}

#[test]
fn nnz_never_exceeds_dense_and_totals_are_sums() {
    for seed in 0..30 {
        let mut r = rng(seed);
        let (nx, nu, t) = (r.random_range(1..=6), r.random_range(1..=4), r.random_range(1..=5));
        let (sys, resp) = sparse_instance(seed, nx, nu, t, 0.4);
        let pu = resp.phi_u_blocks();
        for g in [
            build_centralized(&sys, pu).unwrap(),
            build_global_state(&sys, pu).unwrap(),
            build_naive_distributed(&sys, pu).unwrap(),
            build_memory_conservative(&sys, pu).unwrap(),
        ] {
            let rep = cost_report(&g).unwrap();
            let d = rep.dense;
            let z = rep.nnz;
            assert!(z.memory_scalars <= d.memory_scalars);
            assert!(z.mults_per_step <= d.mults_per_step);
            assert!(z.comm_scalars_per_step <= d.comm_scalars_per_step);
            let link_sum: usize = g.links.iter().map(|l| l.dim).sum();
            assert_eq!(z.comm_scalars_per_step, link_sum, "{}", g.architecture);
            let mem: usize = rep.per_node.iter().map(|n| n.nnz.memory_scalars).sum();
            assert_eq!(mem, z.memory_scalars);
        }
    }
}

#[test]
fn every_collector_part_has_a_real_link() {
    let (sys, resp) = sparse_instance(5, 5, 3, 4, 0.3);
    let g = build_memory_conservative(&sys, resp.phi_u_blocks()).unwrap();
    for (n, node) in g.nodes.iter().enumerate() {
        for b in &node.blocks {
            if let Component::Collector { assembly, .. } = &b.component {
                for p in assembly {
                    if let PartSource::Link(l) = p.source {
                        assert_eq!(g.links[l].dst, n);
                    }
                }
            }
        }
    }
    let rep = cost_report(&g).unwrap();
    assert!(g.links.iter().all(|l| l.dim >= 1));
    assert!(rep.nnz.comm_scalars_per_step <= rep.dense.comm_scalars_per_step);
}
