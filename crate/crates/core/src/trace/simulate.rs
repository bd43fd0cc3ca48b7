use super::{CallFrame, CallTree, FrameId, OpStep};

/// Per-step callback interface driven by [`simulate`].
///
/// Events arrive in execution order: `enter_frame` before the first step of
/// a frame, `exit_frame` after its last step (immediately after the
/// invocation step for frames that execute no code).
pub trait Observer {
    type Error;

    fn enter_frame(&mut self, frame: &CallFrame) -> Result<(), Self::Error>;

    /// `next` is the step that resumes in the same frame after this one,
    /// if any (for invocation steps, the step after the callee returns).
    fn step(&mut self, index: usize, step: &OpStep, frame: FrameId, next: Option<&OpStep>) -> Result<(), Self::Error>;

    fn exit_frame(&mut self, frame: &CallFrame) -> Result<(), Self::Error>;
}

/// Replays `steps` against `observer` as if the transaction were executing.
pub fn simulate<O: Observer>(tree: &CallTree, steps: &[OpStep], observer: &mut O) -> Result<(), O::Error> {
    let n = steps.len();
    let mut spawned: Vec<Vec<FrameId>> = vec![Vec::new(); n];
    let mut closing: Vec<Vec<FrameId>> = vec![Vec::new(); n];
    for frame in tree.frames() {
        if let Some(s) = frame.call_step {
            spawned[s].push(frame.id);
        }
        if !frame.steps.is_empty() {
            closing[frame.steps.end - 1].push(frame.id);
        }
    }
    for list in &mut closing {
        list.sort_by_key(|f| std::cmp::Reverse(tree.frame(*f).depth));
    }

    let root = tree.root();
    observer.enter_frame(root)?;
    if n == 0 {
        return observer.exit_frame(root);
    }
    for (i, step) in steps.iter().enumerate() {
        let fid = tree.frame_of_step(i);
        let next = resume_index(tree, steps, i).map(|j| &steps[j]);
        observer.step(i, step, fid, next)?;
        for &child in &spawned[i] {
            let frame = tree.frame(child);
            observer.enter_frame(frame)?;
            if frame.steps.is_empty() {
                observer.exit_frame(frame)?;
            }
        }
        for &done in &closing[i] {
            observer.exit_frame(tree.frame(done))?;
        }
    }
    Ok(())
}

/// Index of the step that continues `i`'s frame, skipping any callee steps.
pub(crate) fn resume_index(tree: &CallTree, steps: &[OpStep], i: usize) -> Option<usize> {
    let fid = tree.frame_of_step(i);
    let candidate = tree
        .frames()
        .iter()
        .rev()
        .find(|f| f.call_step == Some(i) && !f.steps.is_empty())
        .map(|f| f.steps.end)
        .unwrap_or(i + 1);
    (candidate < steps.len() && tree.frame_of_step(candidate) == fid && steps[candidate].depth == steps[i].depth)
        .then_some(candidate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{parse_trace, reconstruct_frames};
    use serde_json::json;

    struct Recorder {
        events: Vec<String>,
        depths: Vec<u32>,
    }

    impl Observer for Recorder {
        type Error = std::convert::Infallible;
        fn enter_frame(&mut self, f: &CallFrame) -> Result<(), Self::Error> {
            self.events.push(format!("enter {}", f.id));
            Ok(())
        }
        fn step(&mut self, i: usize, s: &OpStep, f: FrameId, _: Option<&OpStep>) -> Result<(), Self::Error> {
            self.events.push(format!("step {i}@{f}"));
            self.depths.push(s.depth);
            Ok(())
        }
        fn exit_frame(&mut self, f: &CallFrame) -> Result<(), Self::Error> {
            self.events.push(format!("exit {}", f.id));
            Ok(())
        }
    }

    #[test]
    fn events_are_properly_nested() {
        let call_stack: Vec<String> = ["0x0", "0x0", "0x0", "0x0", "0x0", "0xbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbb", "0xffff"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mk = |pc: u64, op: &str, depth: u32, stack: Vec<String>| {
            json!({"pc": pc, "op": op, "gas": 1, "gasCost": 1, "depth": depth, "stack": stack, "memory": []})
        };
        let doc = json!({"tx": {"txHash": "0x1", "from": "0xabababababababababababababababababababcd",
                                "to": "0xaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa", "value": "0x0", "input": "0x"},
                         "trace": {"gas": 0, "failed": false, "returnValue": "", "structLogs": [
                            mk(0, "CALL", 1, call_stack.clone()),
                            mk(0, "STOP", 2, vec![]),
                            mk(1, "CALL", 1, vec!["0x1".into()].into_iter().chain(call_stack).collect()),
                            mk(2, "STOP", 1, vec!["0x1".into(), "0x1".into()]),
                         ]}});
        let trace = parse_trace(doc.to_string().as_bytes()).unwrap();
        let tree = reconstruct_frames(&trace).unwrap();
        let mut rec = Recorder { events: vec![], depths: vec![] };
        simulate(&tree, &trace.steps, &mut rec).unwrap();
        assert_eq!(
            rec.events,
            ["enter 0", "step 0@0", "enter 1", "step 1@1", "exit 1", "step 2@0", "enter 2", "exit 2", "step 3@0", "exit 0"]
        );
        assert_eq!(rec.depths, trace.steps.iter().map(|s| s.depth).collect::<Vec<_>>());
    }
}
