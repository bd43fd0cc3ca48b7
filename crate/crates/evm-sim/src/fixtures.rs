//! Hand-assembled contracts and the transactions that make up the fixture
//! corpus.

use std::collections::{BTreeMap, HashMap};

use primitive_types::U256;
use serde_json::Value;

use crate::vm::{execute, trace_document, Env, TraceMeta, Tx, World};
use crate::{addr, addr_word, assemble, calldata, ether, keccak, selector, Addr};

pub struct Fixture {
    pub name: &'static str,
    pub doc: Value,
}

pub fn eoa() -> Addr {
    addr("a11ce00000000000000000000000000000000001")
}
pub fn lp() -> Addr {
    addr("1b00000000000000000000000000000000000002")
}
pub fn owner() -> Addr {
    addr("0e0e000000000000000000000000000000000003")
}
pub fn treasury() -> Addr {
    addr("7ea5000000000000000000000000000000000004")
}
pub fn foo() -> Addr {
    addr("f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0f0")
}
pub fn bar() -> Addr {
    addr("babababababababababababababababababababa")
}
pub fn proxy() -> Addr {
    addr("9090909090909090909090909090909090909090")
}
pub fn relay(i: u8) -> Addr {
    addr(&format!("aaaa{i:02x}{}", "0".repeat(34)))
}
pub fn guard_victim() -> Addr {
    addr("6060606060606060606060606060606060606060")
}
pub fn hook_attacker() -> Addr {
    addr("4848484848484848484848484848484848484848")
}
pub fn pool() -> Addr {
    addr("3030303030303030303030303030303030303030")
}
pub fn mono() -> Addr {
    addr("3333333333333333333333333333333333333333")
}
pub fn weth() -> Addr {
    addr("c02aaa39b223fe8d0a0e5c4f27ead9083c756cc2")
}
pub fn lending() -> Addr {
    addr("1e1e1e1e1e1e1e1e1e1e1e1e1e1e1e1e1e1e1e1e")
}
pub fn vault() -> Addr {
    addr("7a7a7a7a7a7a7a7a7a7a7a7a7a7a7a7a7a7a7a7a")
}
pub fn script() -> Addr {
    addr("5c5c5c5c5c5c5c5c5c5c5c5c5c5c5c5c5c5c5c5c")
}

fn sel(sig: &str) -> String {
    format!("0x{}", hex::encode(selector(sig)))
}

fn asm(src: &str, consts: &[(&str, U256)]) -> Vec<u8> {
    let map: HashMap<&str, U256> = consts.iter().copied().collect();
    assemble(src, &map).unwrap_or_else(|e| panic!("assembly failed: {e}\n{src}"))
}

fn push_addr(a: Addr) -> String {
    format!("PUSH20 0x{}", hex::encode(a.as_bytes()))
}

/// Calls `sig` on the address pushed by `target` with arguments produced by
/// the given snippets. Return data lands in memory at 0.
fn call_fn(target: &str, sig: &str, args: &[&str], value: &str) -> String {
    let mut s = format!("PUSH4 {} PUSH1 0xe0 SHL PUSH1 0 MSTORE\n", sel(sig));
    for (i, a) in args.iter().enumerate() {
        s += &format!("{a} PUSH1 {} MSTORE\n", 4 + 32 * i);
    }
    s += &format!("PUSH1 0x20 PUSH1 0 PUSH1 {} PUSH1 0 {value} {target} GAS CALL POP\n", 4 + 32 * args.len());
    s
}

/// Slot of `mapping(address => uint)` at `base` for `holder`.
pub fn mapping_slot(holder: Addr, base: u64) -> U256 {
    let mut buf = addr_word(holder).to_big_endian().to_vec();
    buf.extend_from_slice(&U256::from(base).to_big_endian());
    U256::from_big_endian(&keccak(&buf))
}

fn pair_slot(a: Addr, b: Addr) -> U256 {
    let mut buf = addr_word(a).to_big_endian().to_vec();
    buf.extend_from_slice(&addr_word(b).to_big_endian());
    U256::from_big_endian(&keccak(&buf))
}

pub fn foo_code(patched: bool) -> Vec<u8> {
    let body = if patched {
        "DUP3 DUP2 SUB DUP3 SSTORE
         PUSH1 0 PUSH1 0 PUSH1 0 PUSH1 0 DUP7 CALLER GAS CALL POP
         STOP"
    } else {
        "PUSH1 0 PUSH1 0 PUSH1 0 PUSH1 0 DUP7 CALLER GAS CALL
         POP @write JUMP
         .org 384 :write
         DUP3 DUP2 SUB DUP3 SSTORE
         STOP"
    };
    let src = format!(
        "PUSH1 0 CALLDATALOAD PUSH1 0xe0 SHR
         PUSH4 {w} EQ @withdraw JUMPI
         PUSH1 0 DUP1 REVERT
         .org 193 :withdraw
         PUSH1 0x04 CALLDATALOAD
         CALLER PUSH1 0 MSTORE PUSH1 0 PUSH1 0x20 MSTORE
         PUSH1 0x40 PUSH1 0 SHA3
         DUP1 SLOAD
         DUP3 DUP2 LT ISZERO @ok JUMPI
         PUSH1 0 DUP1 REVERT
         .org 268 :ok
         {body}",
        w = sel("withdraw(uint256)")
    );
    asm(&src, &[])
}

/// Attacker that re-enters `withdraw` from its fallback while its own
/// balance is below `limit`. With `helper`, re-entry goes through a freshly
/// created contract instead.
pub fn bar_code(limit: U256, amount: U256, via_create: Option<Addr>) -> Vec<u8> {
    let cw = sel("callWithdraw(address)");
    let fallback = match via_create {
        None => "CALLER @do JUMP".to_string(),
        Some(_) => "PUSH2 $HLEN @helper PUSH1 0 CODECOPY PUSH2 $HLEN PUSH1 0 PUSH1 0 CREATE POP STOP".to_string(),
    };
    let helper = via_create.map(|victim| {
        asm(
            &format!(
                "PUSH4 {cw} PUSH1 0xe0 SHL PUSH1 0 MSTORE {v} PUSH1 4 MSTORE
                 PUSH1 0 PUSH1 0 PUSH1 0x24 PUSH1 0 PUSH1 0 CALLER GAS CALL POP STOP",
                v = push_addr(victim)
            ),
            &[],
        )
    });
    let tail = helper.as_ref().map(|h| format!("=helper .bytes 0x{}", hex::encode(h))).unwrap_or_default();
    let hlen = U256::from(helper.as_ref().map_or(0, |h| h.len()));
    let src = format!(
        "PUSH1 0 CALLDATALOAD PUSH1 0xe0 SHR
         PUSH4 {cw} EQ @cw JUMPI
         $LIMIT SELFBALANCE LT @again JUMPI
         STOP
         :again {fallback}
         :cw PUSH1 4 CALLDATALOAD
         :do
         PUSH4 {w} PUSH1 0xe0 SHL PUSH1 0 MSTORE
         $AMT PUSH1 4 MSTORE
         PUSH1 0 PUSH1 0 PUSH1 0x24 PUSH1 0 PUSH1 0 DUP6 GAS CALL POP
         STOP
         {tail}",
        w = sel("withdraw(uint256)")
    );
    asm(&src, &[("LIMIT", limit), ("AMT", amount), ("HLEN", hlen)])
}

pub fn proxy_code(logic: Addr) -> Vec<u8> {
    asm(
        &format!(
            "CALLDATASIZE PUSH1 0 PUSH1 0 CALLDATACOPY
             PUSH1 0 PUSH1 0 CALLDATASIZE PUSH1 0 {} GAS DELEGATECALL POP STOP",
            push_addr(logic)
        ),
        &[],
    )
}

/// Forwards the tail of its calldata to the address in the first word,
/// sending one wei, then bumps a counter it read before the call.
pub fn relay_code() -> Vec<u8> {
    asm(
        "PUSH1 100 PUSH1 0 SLOAD LT ISZERO @fail JUMPI
         CALLDATASIZE PUSH1 0x20 GT @done JUMPI
         PUSH1 0 SLOAD PUSH2 0x200 MSTORE
         PUSH1 0x20 CALLDATASIZE SUB PUSH1 0x20 PUSH1 0 CALLDATACOPY
         PUSH1 0 PUSH1 0 PUSH1 0x20 CALLDATASIZE SUB PUSH1 0 PUSH1 1 PUSH1 0 CALLDATALOAD GAS CALL POP
         PUSH1 1 PUSH2 0x200 MLOAD ADD PUSH1 0 SSTORE
         :done STOP
         :fail PUSH1 0 DUP1 REVERT",
        &[],
    )
}

pub fn guard_victim_code() -> Vec<u8> {
    asm(
        &format!(
            "PUSH1 0 CALLDATALOAD PUSH1 0xe0 SHR PUSH4 {run} EQ @run JUMPI
             :fail PUSH1 0 DUP1 REVERT
             :run
             PUSH1 0 SLOAD PUSH2 0x200 MSTORE
             PUSH1 10 PUSH2 0x200 MLOAD LT ISZERO @fail JUMPI
             PUSH4 {hook} PUSH1 0xe0 SHL PUSH1 0 MSTORE
             PUSH1 0 PUSH1 0 PUSH1 4 PUSH1 0 PUSH1 0 CALLER GAS CALL POP
             PUSH1 1 PUSH2 0x200 MLOAD ADD PUSH1 0 SSTORE STOP",
            run = sel("run()"),
            hook = sel("hook()")
        ),
        &[],
    )
}

pub fn hook_attacker_code(victim: Addr) -> Vec<u8> {
    let call = call_fn(&push_addr(victim), "run()", &[], "PUSH1 0");
    asm(
        &format!(
            "PUSH1 0 CALLDATALOAD PUSH1 0xe0 SHR
             DUP1 PUSH4 {start} EQ @start JUMPI
             DUP1 PUSH4 {hook} EQ @hook JUMPI
             PUSH1 0 DUP1 REVERT
             :start POP {call} STOP
             :hook POP PUSH1 0 SLOAD @out JUMPI
             PUSH1 1 PUSH1 0 SSTORE
             {call}
             :out STOP",
            start = sel("start()"),
            hook = sel("hook()")
        ),
        &[],
    )
}

/// Minimal ERC-20: `transfer`, `transferFrom` (no allowances) and `balanceOf`,
/// balances in `mapping(address => uint)` at slot 0.
pub fn token_code() -> Vec<u8> {
    let topic = U256::from_big_endian(&keccak(b"Transfer(address,address,uint256)"));
    asm(
        &format!(
            "PUSH1 0 CALLDATALOAD PUSH1 0xe0 SHR
             DUP1 PUSH4 {t} EQ @transfer JUMPI
             DUP1 PUSH4 {tf} EQ @transferFrom JUMPI
             DUP1 PUSH4 {b} EQ @balanceOf JUMPI
             :fail PUSH1 0 DUP1 REVERT
             :transfer POP CALLER PUSH1 0x04 CALLDATALOAD PUSH1 0x24 CALLDATALOAD @move JUMP
             :transferFrom POP PUSH1 0x04 CALLDATALOAD PUSH1 0x24 CALLDATALOAD PUSH1 0x44 CALLDATALOAD @move JUMP
             :move
             DUP3 PUSH1 0 MSTORE PUSH1 0 PUSH1 0x20 MSTORE PUSH1 0x40 PUSH1 0 SHA3
             DUP1 SLOAD
             DUP1 DUP4 GT @fail JUMPI
             DUP3 SWAP1 SUB SWAP1 SSTORE
             DUP2 PUSH1 0 MSTORE PUSH1 0 PUSH1 0x20 MSTORE PUSH1 0x40 PUSH1 0 SHA3
             DUP1 SLOAD DUP3 ADD SWAP1 SSTORE
             PUSH1 0 MSTORE
             SWAP1 $TOPIC PUSH1 0x20 PUSH1 0 LOG3
             PUSH1 1 PUSH1 0 MSTORE PUSH1 0x20 PUSH1 0 RETURN
             :balanceOf POP PUSH1 4 CALLDATALOAD PUSH1 0 MSTORE PUSH1 0 PUSH1 0x20 MSTORE PUSH1 0x40 PUSH1 0 SHA3
             SLOAD PUSH1 0 MSTORE PUSH1 0x20 PUSH1 0 RETURN",
            t = sel("transfer(address,uint256)"),
            tf = sel("transferFrom(address,address,uint256)"),
            b = sel("balanceOf(address)")
        ),
        &[("TOPIC", topic)],
    )
}

pub const SWAP_SIG: &str = "swapExactTokenForToken(address,address,uint256,uint256,address,uint256)";
pub const REMOVE_SIG: &str = "removeLiquidity(address,uint256,address,uint256,uint256)";

/// Exchange keeping one price slot per token (slot = token address) and
/// liquidity positions at `keccak(provider . token)`. Owner lives in slot 2.
pub fn pool_code(guard_remove: bool) -> Vec<u8> {
    let guard = if guard_remove { "ORIGIN PUSH1 2 SLOAD EQ ISZERO @fail JUMPI" } else { "" };
    let pull = call_fn(
        "PUSH1 0x04 CALLDATALOAD",
        "transferFrom(address,address,uint256)",
        &["CALLER", "ADDRESS", "PUSH1 0x44 CALLDATALOAD"],
        "PUSH1 0",
    );
    let send = call_fn(
        "PUSH1 0x24 CALLDATALOAD",
        "transfer(address,uint256)",
        &["PUSH1 0x84 CALLDATALOAD", "PUSH2 0x240 MLOAD"],
        "PUSH1 0",
    );
    let refund = call_fn(
        "PUSH1 0x04 CALLDATALOAD",
        "transfer(address,uint256)",
        &["PUSH1 0x44 CALLDATALOAD", "PUSH1 0x24 CALLDATALOAD"],
        "PUSH1 0",
    );
    asm(
        &format!(
            "PUSH1 0 CALLDATALOAD PUSH1 0xe0 SHR
             DUP1 PUSH4 {swap} EQ @swap JUMPI
             DUP1 PUSH4 {remove} EQ @remove JUMPI
             DUP1 PUSH4 {price} EQ @price JUMPI
             DUP1 PUSH4 {setprice} EQ @setprice JUMPI
             :fail PUSH1 0 DUP1 REVERT
             :swap POP
             PUSH1 0xa4 CALLDATALOAD TIMESTAMP GT @fail JUMPI
             {pull}
             PUSH1 0x04 CALLDATALOAD SLOAD PUSH2 0x200 MSTORE
             PUSH1 0x24 CALLDATALOAD SLOAD PUSH2 0x220 MSTORE
             PUSH2 0x220 MLOAD PUSH2 0x200 MLOAD PUSH1 0x44 CALLDATALOAD MUL DIV PUSH2 0x240 MSTORE
             PUSH1 0x64 CALLDATALOAD PUSH2 0x240 MLOAD LT @fail JUMPI
             PUSH1 10 PUSH1 9 PUSH2 0x200 MLOAD MUL DIV PUSH1 0x04 CALLDATALOAD SSTORE
             PUSH1 10 PUSH1 11 PUSH2 0x220 MLOAD MUL DIV PUSH1 0x24 CALLDATALOAD SSTORE
             {send}
             PUSH1 0x20 PUSH2 0x240 RETURN
             :remove POP
             {guard}
             PUSH1 0x44 CALLDATALOAD PUSH1 0 MSTORE PUSH1 0x04 CALLDATALOAD PUSH1 0x20 MSTORE
             PUSH1 0x40 PUSH1 0 SHA3 PUSH2 0x200 MSTORE
             PUSH2 0x200 MLOAD SLOAD PUSH2 0x220 MSTORE
             PUSH1 0x24 CALLDATALOAD PUSH2 0x220 MLOAD LT @fail JUMPI
             PUSH1 0x24 CALLDATALOAD PUSH2 0x220 MLOAD SUB PUSH2 0x200 MLOAD SSTORE
             {refund}
             STOP
             :price POP PUSH1 4 CALLDATALOAD SLOAD PUSH1 0 MSTORE PUSH1 0x20 PUSH1 0 RETURN
             :setprice POP
             ORIGIN PUSH1 2 SLOAD EQ ISZERO @fail JUMPI
             PUSH1 0x24 CALLDATALOAD PUSH1 0x04 CALLDATALOAD SSTORE STOP",
            swap = sel(SWAP_SIG),
            remove = sel(REMOVE_SIG),
            price = sel("price(address)"),
            setprice = sel("setPrice(address,uint256)"),
        ),
        &[],
    )
}

/// Lends WETH against collateral valued at the pool's current MONO price.
pub fn lending_code() -> Vec<u8> {
    let pay = call_fn(&push_addr(weth()), "transfer(address,uint256)", &["CALLER", "PUSH2 0x240 MLOAD"], "PUSH1 0");
    asm(
        &format!(
            "PUSH1 0 CALLDATALOAD PUSH1 0xe0 SHR PUSH4 {borrow} EQ @borrow JUMPI
             :fail PUSH1 0 DUP1 REVERT
             :borrow
             PUSH4 {price} PUSH1 0xe0 SHL PUSH1 0 MSTORE {mono} PUSH1 4 MSTORE
             PUSH1 0x20 PUSH1 0 PUSH1 0x24 PUSH1 0 {pool} GAS STATICCALL POP
             PUSH1 0 MLOAD PUSH2 0x200 MSTORE
             CALLER PUSH1 0 MSTORE PUSH1 0 PUSH1 0x20 MSTORE PUSH1 0x40 PUSH1 0 SHA3 SLOAD PUSH2 0x220 MSTORE
             $E18 PUSH2 0x200 MLOAD PUSH2 0x220 MLOAD MUL DIV PUSH2 0x240 MSTORE
             PUSH1 1 SLOAD PUSH2 0x240 MLOAD GT @fail JUMPI
             {pay}
             STOP",
            borrow = sel("borrow()"),
            price = sel("price(address)"),
            mono = push_addr(mono()),
            pool = push_addr(pool()),
        ),
        &[("E18", ether(1))],
    )
}

/// Pays out accrued rewards to a hard-coded treasury; anyone may call it.
pub fn vault_code() -> Vec<u8> {
    let pay = call_fn(
        &push_addr(mono()),
        "transfer(address,uint256)",
        &[&push_addr(treasury()), "PUSH2 0x200 MLOAD"],
        "PUSH1 0",
    );
    asm(
        &format!(
            "PUSH1 0 CALLDATALOAD PUSH1 0xe0 SHR PUSH4 {h} EQ @harvest JUMPI
             :fail PUSH1 0 DUP1 REVERT
             :harvest
             PUSH1 0 SLOAD PUSH2 0x200 MSTORE
             PUSH2 0x200 MLOAD ISZERO @fail JUMPI
             PUSH1 0 PUSH1 0 SSTORE
             {pay}
             STOP",
            h = sel("harvest()")
        ),
        &[],
    )
}

/// Contract that performs a fixed list of calls with constant calldata.
pub fn script_code(calls: &[(Addr, U256, Vec<u8>)], prologue: &str) -> Vec<u8> {
    let mut body = String::from(prologue);
    let mut tail = String::new();
    let mut consts = Vec::new();
    let names: Vec<String> = (0..calls.len()).map(|i| format!("V{i}")).collect();
    for (i, (target, value, data)) in calls.iter().enumerate() {
        body += &format!(
            "\nPUSH2 {len} @d{i} PUSH1 0 CODECOPY
             PUSH1 0x20 PUSH2 0x1000 PUSH2 {len} PUSH1 0 ${v} {t} GAS CALL POP",
            len = data.len(),
            v = names[i],
            t = push_addr(*target)
        );
        tail += &format!("\n=d{i} .bytes 0x{}", hex::encode(data));
        consts.push(*value);
    }
    let src = format!("{body}\nSTOP\n:fail PUSH1 0 DUP1 REVERT{tail}");
    let pairs: Vec<(&str, U256)> = names.iter().map(|n| n.as_str()).zip(consts).collect();
    asm(&src, &pairs)
}

fn word(a: Addr) -> U256 {
    addr_word(a)
}

fn build(name: &'static str, mut world: World, tx: Tx, tokens: &[(Addr, Vec<Addr>)]) -> Fixture {
    let env = Env::default();
    let before = world.clone();
    let mut meta = TraceMeta { tx_hash: keccak(name.as_bytes()), token_balances: BTreeMap::new() };
    for (token, holders) in tokens {
        let m = holders.iter().map(|h| (*h, before.sload(*token, mapping_slot(*h, 0)))).collect();
        meta.token_balances.insert(*token, m);
    }
    let outcome = execute(&mut world, &env, &tx);
    Fixture { name, doc: trace_document(&before, &env, &tx, &outcome, &meta) }
}

fn with_eoa(balance: U256) -> World {
    let mut w = World::default();
    w.account(eoa()).balance = balance;
    w
}

fn foo_bar(name: &'static str, patched: bool) -> Fixture {
    let mut w = with_eoa(ether(1));
    w.deploy(foo(), foo_code(patched), ether(100));
    w.account(foo()).storage.insert(mapping_slot(bar(), 0), ether(30));
    w.deploy(bar(), bar_code(ether(30), ether(10), None), U256::zero());
    let tx = Tx::call(eoa(), bar(), U256::zero(), calldata("callWithdraw(address)", &[word(foo())]));
    build(name, w, tx, &[])
}

fn delegate_reentrancy() -> Fixture {
    let logic = addr("1091c00000000000000000000000000000000000");
    let mut w = with_eoa(ether(1));
    w.deploy(logic, foo_code(false), U256::zero());
    w.deploy(proxy(), proxy_code(logic), ether(100));
    w.account(proxy()).storage.insert(mapping_slot(bar(), 0), ether(30));
    w.deploy(bar(), bar_code(ether(30), ether(10), None), U256::zero());
    let tx = Tx::call(eoa(), bar(), U256::zero(), calldata("callWithdraw(address)", &[word(proxy())]));
    build("delegatecall_reentrancy", w, tx, &[])
}

fn create_reentrancy() -> Fixture {
    let mut w = with_eoa(ether(1));
    w.deploy(foo(), foo_code(false), ether(100));
    w.account(foo()).storage.insert(mapping_slot(bar(), 0), ether(30));
    w.deploy(bar(), bar_code(ether(30), ether(10), Some(foo())), U256::zero());
    let tx = Tx::call(eoa(), bar(), U256::zero(), calldata("callWithdraw(address)", &[word(foo())]));
    build("create_reentrancy", w, tx, &[])
}

fn relays(name: &'static str, hops: &[Addr]) -> Fixture {
    let mut w = with_eoa(ether(1));
    for i in 0..3 {
        w.deploy(relay(i), relay_code(), U256::from(10));
    }
    let data: Vec<u8> = hops[1..].iter().flat_map(|a| word(*a).to_big_endian()).collect();
    let tx = Tx::call(eoa(), hops[0], U256::zero(), data);
    build(name, w, tx, &[])
}

fn no_asset_flow() -> Fixture {
    let mut w = with_eoa(ether(1));
    w.deploy(guard_victim(), guard_victim_code(), U256::zero());
    w.deploy(hook_attacker(), hook_attacker_code(guard_victim()), U256::zero());
    let tx = Tx::call(eoa(), hook_attacker(), U256::zero(), calldata("start()", &[]));
    build("no_asset_flow", w, tx, &[])
}

fn empty_transfer() -> Fixture {
    let w = with_eoa(ether(5));
    let tx = Tx::call(eoa(), lp(), ether(1), Vec::new());
    build("empty_transfer", w, tx, &[])
}

fn single_frame() -> Fixture {
    let counter = addr("c0c0c0c0c0c0c0c0c0c0c0c0c0c0c0c0c0c0c0c0");
    let code = asm(
        "PUSH1 0 SLOAD PUSH1 4 CALLDATALOAD ADD
         DUP1 PUSH2 1000 LT @skip JUMPI
         DUP1 PUSH1 0 SSTORE
         :skip STOP",
        &[],
    );
    let mut w = with_eoa(ether(1));
    w.deploy(counter, code, U256::zero());
    w.account(counter).storage.insert(U256::zero(), U256::from(5));
    let tx = Tx::call(eoa(), counter, U256::zero(), calldata("add(uint256)", &[U256::from(7)]));
    build("single_frame", w, tx, &[])
}

fn child_revert() -> Fixture {
    let parent = addr("9a9a9a9a9a9a9a9a9a9a9a9a9a9a9a9a9a9a9a9a");
    let child = addr("c1c1c1c1c1c1c1c1c1c1c1c1c1c1c1c1c1c1c1c1");
    let child_code = asm("PUSH1 5 PUSH1 0 SSTORE PUSH1 0 PUSH1 0 REVERT", &[]);
    let parent_code = asm(
        &format!(
            "PUSH1 1 PUSH1 0 SSTORE
             PUSH1 0 PUSH1 0 PUSH1 0 PUSH1 0 PUSH1 7 {} GAS CALL
             PUSH1 1 SSTORE STOP",
            push_addr(child)
        ),
        &[],
    );
    let mut w = with_eoa(ether(1));
    w.deploy(parent, parent_code, U256::from(100));
    w.deploy(child, child_code, U256::zero());
    let tx = Tx::call(eoa(), parent, U256::zero(), Vec::new());
    build("child_revert", w, tx, &[])
}

fn data_flow() -> Fixture {
    let df = addr("df00000000000000000000000000000000000df0");
    let callee = addr("ca11ee00000000000000000000000000000000ca");
    let code = asm(
        "SELFBALANCE PUSH1 0 SSTORE
         CALLER PUSH1 0 MSTORE PUSH1 1 PUSH1 0x20 MSTORE PUSH1 0x40 PUSH1 0 SHA3
         DUP1 SLOAD CALLVALUE ADD SWAP1 SSTORE
         PUSH1 0 SLOAD PUSH1 0 MSTORE
         PUSH1 0 PUSH1 0 PUSH1 0x20 PUSH1 0 PUSH1 0 PUSH1 2 SLOAD GAS CALL POP STOP",
        &[],
    );
    let callee_code = asm("PUSH1 0 CALLDATALOAD PUSH1 0 SSTORE STOP", &[]);
    let mut w = with_eoa(ether(10));
    w.deploy(df, code, ether(2));
    w.account(df).storage.insert(U256::from(2), word(callee));
    w.deploy(callee, callee_code, U256::zero());
    let tx = Tx::call(eoa(), df, ether(1), Vec::new());
    build("data_flow", w, tx, &[])
}

fn selfdestruct() -> Fixture {
    let killer = addr("dead00000000000000000000000000000000dead");
    let code = asm("PUSH1 0 CALLDATALOAD SELFDESTRUCT", &[]);
    let mut w = with_eoa(ether(1));
    w.deploy(killer, code, ether(5));
    let tx = Tx::call(eoa(), killer, U256::zero(), word(treasury()).to_big_endian().to_vec());
    build("selfdestruct", w, tx, &[])
}

fn guarded_withdraw() -> Fixture {
    let owned = addr("0d0d0d0d0d0d0d0d0d0d0d0d0d0d0d0d0d0d0d0d");
    let code = asm(
        "CALLER PUSH1 0 SLOAD EQ ISZERO @fail JUMPI
         PUSH1 4 CALLDATALOAD PUSH1 1 SSTORE
         PUSH1 1 SLOAD ISZERO @fail JUMPI
         PUSH1 0 PUSH1 0 PUSH1 0 PUSH1 0 PUSH1 1 SLOAD CALLER GAS CALL POP STOP
         :fail PUSH1 0 DUP1 REVERT",
        &[],
    );
    let mut w = with_eoa(ether(1));
    w.deploy(owned, code, ether(10));
    w.account(owned).storage.insert(U256::zero(), word(eoa()));
    let tx = Tx::call(eoa(), owned, U256::zero(), calldata("withdraw(uint256)", &[ether(2)]));
    build("guarded_withdraw", w, tx, &[])
}

fn set_token_balance(w: &mut World, token: Addr, holder: Addr, amount: U256) {
    w.account(token).storage.insert(mapping_slot(holder, 0), amount);
}

fn exchange_world(guard_remove: bool) -> World {
    let mut w = with_eoa(ether(1));
    w.account(owner()).balance = ether(1);
    w.deploy(mono(), token_code(), U256::zero());
    w.deploy(weth(), token_code(), U256::zero());
    w.deploy(pool(), pool_code(guard_remove), U256::zero());
    let p = w.account(pool());
    p.storage.insert(word(mono()), ether(1));
    p.storage.insert(word(weth()), ether(1));
    p.storage.insert(U256::from(2), word(owner()));
    p.storage.insert(pair_slot(lp(), mono()), ether(40));
    set_token_balance(&mut w, mono(), pool(), ether(1000));
    w
}

fn remove_call() -> Vec<u8> {
    calldata(REMOVE_SIG, &[word(mono()), ether(40), word(lp()), U256::zero(), U256::zero()])
}

fn swap_call(token_in: Addr, token_out: Addr, amount: U256, to: Addr) -> Vec<u8> {
    calldata(SWAP_SIG, &[word(token_in), word(token_out), amount, U256::one(), word(to), U256::from(u64::MAX)])
}

fn exchange_tokens() -> Vec<(Addr, Vec<Addr>)> {
    let holders = vec![pool(), script(), lp(), lending(), treasury(), vault(), eoa(), owner()];
    vec![(mono(), holders.clone()), (weth(), holders)]
}

fn monox_remove(name: &'static str, guarded: bool) -> Fixture {
    let mut w = exchange_world(guarded);
    w.deploy(script(), script_code(&[(pool(), U256::zero(), remove_call())], ""), U256::zero());
    let from = if guarded { owner() } else { eoa() };
    let tx = Tx::call(from, script(), U256::zero(), Vec::new());
    build(name, w, tx, &exchange_tokens())
}

fn attacker_origin_check() -> Fixture {
    let w = exchange_world(false);
    let prologue = format!("ORIGIN {} EQ ISZERO @fail JUMPI", push_addr(eoa()));
    let init = script_code(&[(pool(), U256::zero(), remove_call())], &prologue);
    let tx = Tx { from: eoa(), to: None, value: U256::zero(), input: init, gas: 10_000_000 };
    build("attacker_origin_check", w, tx, &exchange_tokens())
}

fn harvest() -> Fixture {
    let mut w = exchange_world(false);
    w.deploy(vault(), vault_code(), U256::zero());
    w.account(vault()).storage.insert(U256::zero(), ether(3));
    set_token_balance(&mut w, mono(), vault(), ether(50));
    let tx = Tx::call(eoa(), vault(), U256::zero(), calldata("harvest()", &[]));
    build("harvest_fixed_recipient", w, tx, &exchange_tokens())
}

fn user_swap() -> Fixture {
    let mut w = exchange_world(false);
    set_token_balance(&mut w, weth(), eoa(), ether(20));
    set_token_balance(&mut w, weth(), pool(), ether(100));
    let tx = Tx::call(eoa(), pool(), U256::zero(), swap_call(weth(), mono(), ether(2), eoa()));
    build("user_swap", w, tx, &exchange_tokens())
}

fn price_pump() -> Fixture {
    let mut w = exchange_world(false);
    set_token_balance(&mut w, weth(), script(), ether(100));
    set_token_balance(&mut w, weth(), pool(), ether(10));
    let mut calls = vec![(pool(), U256::zero(), swap_call(weth(), mono(), ether(50), script()))];
    for _ in 0..5 {
        calls.push((pool(), U256::zero(), swap_call(mono(), mono(), ether(10), script())));
    }
    w.deploy(script(), script_code(&calls, ""), U256::zero());
    let tx = Tx::call(eoa(), script(), U256::zero(), Vec::new());
    build("monox_price_pump", w, tx, &exchange_tokens())
}

fn lending_world(w: &mut World, borrower: Addr) {
    w.deploy(lending(), lending_code(), U256::zero());
    w.account(lending()).storage.insert(mapping_slot(borrower, 0), ether(10));
    w.account(lending()).storage.insert(U256::one(), ether(1000));
    set_token_balance(w, weth(), lending(), ether(1000));
}

fn swap_borrow(name: &'static str, pool_weth: U256, swap_in: U256) -> Fixture {
    let mut w = exchange_world(false);
    set_token_balance(&mut w, weth(), script(), ether(200));
    set_token_balance(&mut w, weth(), pool(), pool_weth);
    lending_world(&mut w, script());
    let calls = vec![
        (pool(), U256::zero(), swap_call(weth(), mono(), swap_in, script())),
        (lending(), U256::zero(), calldata("borrow()", &[])),
    ];
    w.deploy(script(), script_code(&calls, ""), U256::zero());
    let tx = Tx::call(eoa(), script(), U256::zero(), Vec::new());
    build(name, w, tx, &exchange_tokens())
}

fn origin_guarded_price() -> Fixture {
    let mut w = exchange_world(false);
    lending_world(&mut w, script());
    let calls = vec![
        (pool(), U256::zero(), calldata("setPrice(address,uint256)", &[word(mono()), ether(2)])),
        (lending(), U256::zero(), calldata("borrow()", &[])),
    ];
    w.deploy(script(), script_code(&calls, ""), U256::zero());
    let tx = Tx::call(owner(), script(), U256::zero(), Vec::new());
    build("origin_guarded_price", w, tx, &exchange_tokens())
}

/// Every fixture, in a stable order.
pub fn all() -> Vec<Fixture> {
    vec![
        foo_bar("foo_bar_attack", false),
        foo_bar("foo_bar_patched", true),
        relays("benign_nested", &[relay(0), relay(1), relay(2)]),
        relays("mutual_recursion", &[relay(0), relay(1), relay(0), relay(1)]),
        delegate_reentrancy(),
        create_reentrancy(),
        no_asset_flow(),
        empty_transfer(),
        single_frame(),
        child_revert(),
        data_flow(),
        selfdestruct(),
        guarded_withdraw(),
        monox_remove("monox_remove_liquidity", false),
        monox_remove("monox_remove_liquidity_guarded", true),
        attacker_origin_check(),
        harvest(),
        user_swap(),
        price_pump(),
        swap_borrow("swap_borrow_1pct", ether(99), ether(1)),
        swap_borrow("swap_borrow_99pct", ether(1), ether(99)),
        origin_guarded_price(),
    ]
}

/// Historical USD prices for the tokens used above.
pub fn price_table() -> String {
    let b = Env::default().block_number;
    format!(
        "token,block,usd_price\nETH,{old},4000\n{weth:?},{old},4000\n{mono:?},{old},50\n{mono:?},{recent},50\n",
        old = b - 100,
        recent = b - 10,
        weth = weth(),
        mono = mono(),
    )
}
