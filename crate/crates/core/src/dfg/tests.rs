use super::*;
use crate::asm::parse_program;

fn body(src: &str) -> Vec<Instruction> {
    parse_program(src).unwrap().instructions
}

fn once() -> MemContext {
    MemContext { iterations: Some(1), ..MemContext::default() }
}

fn intra(g: &Dfg) -> Vec<(usize, usize, DepKind)> {
    g.edges.iter().filter(|e| !e.loop_carried).map(|e| (e.src, e.dst, e.kind)).collect()
}

#[test]
fn register_handoff() {
    let g = build_dfg(&body("add t0, t0, t1\nfcvt.d.wu ft0, t0")).unwrap();
    let t0 = Reg::parse("t0").unwrap();
    assert_eq!(intra(&g), vec![(0, 1, DepKind::RegRaw(t0))]);
    let cross = cross_deps(&g);
    assert_eq!(cross.len(), 1);
    assert_eq!(cross[0].direction, Direction::IntToFp);
    assert_eq!(cross[0].carrier, Carrier::Register(t0));
}

#[test]
fn memory_handoff() {
    let g = build_dfg_with(&body("sw t1, 8(t0)\nsw t2, 12(t0)\nfld ft0, 8(t0)"), 0, &once()).unwrap();
    // Both words lie inside the 8-byte load; the stores themselves are disjoint.
    let e = intra(&g);
    assert!(e.contains(&(0, 2, DepKind::MemOrder)));
    assert!(e.contains(&(1, 2, DepKind::MemOrder)));
    assert!(!e.iter().any(|&(s, d, _)| (s, d) == (0, 1)));
    let cross = cross_deps(&g);
    assert_eq!(cross.len(), 2);
    for c in &cross {
        assert_eq!((c.direction, c.carrier), (Direction::IntToFp, Carrier::Memory));
        let chain = c.address.as_ref().unwrap();
        assert_eq!(chain.base, Reg::parse("t0").unwrap());
        assert!(chain.producers.is_empty());
    }
}

#[test]
fn disjoint_offsets_are_pruned() {
    let g = build_dfg_with(&body("sw t1, 8(t0)\nsw t2, 16(t0)\nfld ft0, 16(t0)"), 0, &once()).unwrap();
    assert_eq!(intra(&g), vec![(1, 2, DepKind::MemOrder)]);
}

#[test]
fn base_redefinition_blocks_disambiguation() {
    let g = build_dfg_with(&body("sw t1, 8(t0)\nlw t0, 0(t3)\nlw t2, 16(t0)"), 0, &once()).unwrap();
    assert!(intra(&g).contains(&(0, 2, DepKind::MemOrder)));
}

#[test]
fn address_chain_follows_producers() {
    let g = build_dfg_with(&body("slli t1, t2, 3\nadd t0, a0, t1\nsw t3, 0(t0)\nfld ft0, 0(t0)"), 0, &once()).unwrap();
    let cross = cross_deps(&g);
    let mem = cross.iter().find(|c| c.carrier == Carrier::Memory).unwrap();
    assert_eq!(mem.address.as_ref().unwrap().producers, vec![0, 1]);
    assert!(cross.iter().any(|c| c.carrier == Carrier::Register(Reg::parse("t0").unwrap())));
}

#[test]
fn single_instruction_has_no_edges() {
    assert!(build_dfg(&body("fadd.d ft0, ft1, ft2")).unwrap().edges.is_empty());
}

#[test]
fn all_integer_body_has_no_cross_deps() {
    let g = build_dfg(&body("lw t0, 0(a0)\naddi t0, t0, 1\nsw t0, 0(a0)\naddi a0, a0, 4")).unwrap();
    assert!(cross_deps(&g).is_empty());
}

#[test]
fn closing_branch_is_excluded() {
    let g = build_dfg(&body("l:\naddi t0, t0, 1\nfcvt.d.w ft0, t0\nbne t0, t1, l")).unwrap();
    assert_eq!(g.len(), 2);
    assert!(g.closing_branch.is_some());
}

#[test]
fn inner_control_flow_rejected() {
    let e = build_dfg_with(&body("l:\nbeq t0, t1, l\naddi t0, t0, 1\nbne t0, t1, l"), 10, &MemContext::default());
    assert!(matches!(e, Err(DfgError::UnsupportedShape { index: 10, .. })));
    assert!(build_dfg(&body("csrrw x0, EnCopiftQueues, x0\nnop")).is_err());
    assert!(build_dfg(&body("frep 2, 1\nfadd.d ft0, ft0, ft0")).is_err());
}

#[test]
fn loop_carried_edges() {
    let g = build_dfg(&body("fcvt.d.w ft0, t0\naddi t0, t0, 1")).unwrap();
    let t0 = Reg::parse("t0").unwrap();
    let carried: Vec<_> = g.edges.iter().filter(|e| e.loop_carried).map(|e| (e.src, e.dst, e.kind)).collect();
    assert!(carried.contains(&(1, 0, DepKind::RegRaw(t0))));
    assert!(intra(&g).contains(&(0, 1, DepKind::RegWar(t0))));
    let once = build_dfg_with(&body("fcvt.d.w ft0, t0\naddi t0, t0, 1"), 0, &once()).unwrap();
    assert!(once.edges.iter().all(|e| !e.loop_carried));
}

#[test]
fn induction_stride_separates_iterations() {
    // Load of a[i+1] after the store to a[i]: the next iteration's store hits
    // what this iteration loaded, so a carried edge remains.
    let g = build_dfg(&body("sw t1, 0(a0)\nlw t2, 4(a0)\naddi a0, a0, 4")).unwrap();
    assert!(g.edges.iter().any(|e| e.loop_carried && (e.src, e.dst) == (1, 0)));
    // Streaming pointer: each iteration touches a fresh word.
    let g = build_dfg(&body("lw t2, 0(a0)\nsw t2, 0(a0)\naddi a0, a0, 4")).unwrap();
    assert!(g.edges.iter().all(|e| !(e.loop_carried && e.kind == DepKind::MemOrder)));
    // A known entry value must not blur the per-iteration distance.
    let mut ctx = MemContext { iterations: Some(8), ..MemContext::default() };
    ctx.base_values[12] = Some(0x2000);
    let g = build_dfg_with(&body("sw t0, 0(a2)\nfld ft0, 0(a2)\naddi a2, a2, 8"), 0, &ctx).unwrap();
    let mem: Vec<bool> = g.edges.iter().filter(|e| e.kind == DepKind::MemOrder).map(|e| e.loop_carried).collect();
    assert_eq!(mem, vec![false]);
}

#[test]
fn absolute_ranges_separate_arrays() {
    let src = "lw t0, 0(a0)\nfcvt.d.w ft0, t0\nfsd ft0, 0(a1)\naddi a0, a0, 4\naddi a1, a1, 8";
    let mut ctx = MemContext { iterations: Some(16), ..MemContext::default() };
    let g = build_dfg_with(&body(src), 0, &ctx).unwrap();
    assert!(g.edges.iter().any(|e| e.kind == DepKind::MemOrder));
    ctx.base_values[10] = Some(0x1000);
    ctx.base_values[11] = Some(0x1040);
    let g = build_dfg_with(&body(src), 0, &ctx).unwrap();
    assert!(!g.edges.iter().any(|e| e.kind == DepKind::MemOrder));
    ctx.base_values[11] = Some(0x1038);
    let g = build_dfg_with(&body(src), 0, &ctx).unwrap();
    assert!(g.edges.iter().any(|e| e.kind == DepKind::MemOrder && e.loop_carried));
}

#[test]
fn dump_format() {
    let g = build_dfg_with(&body("add t0, t0, t1\nfcvt.d.wu ft0, t0"), 4, &once()).unwrap();
    assert_eq!(g.to_string(), "4 -> 5 [raw t0]\n");
    assert!(g.to_dot().starts_with("digraph"));
}

#[test]
fn program_order_is_topological() {
    let g = build_dfg(&body("add t0, t0, t1\nfcvt.d.wu ft0, t0\nfadd.d ft1, ft0, ft0")).unwrap();
    assert!(check_topological(&g, &[0, 1, 2]));
    assert!(!check_topological(&g, &[1, 0, 2]));
    assert!(check_topological(&g, &[0, 2]));
    assert!(!check_topological(&g, &[0, 0, 1]));
}
