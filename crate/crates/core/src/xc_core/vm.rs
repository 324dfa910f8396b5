use std::collections::BTreeMap;

use super::{nfold, AlignmentPath, DeviceId, Export, Literal, LocalState, NValue, RoundContext, Token, XcError};

/// Evaluator for one device round of an embedded XC program.
///
/// Programs are ordinary Rust closures over `&mut Vm`. Every construct that
/// communicates or keeps state gets a path from the enclosing scope, the
/// construct tag and an occurrence counter, so the same program run on
/// different devices produces matching paths.
pub struct Vm<'c> {
    ctx: &'c RoundContext,
    path: AlignmentPath,
    frames: Vec<BTreeMap<&'static str, u32>>,
    export: Export,
    state: LocalState,
}

impl<'c> Vm<'c> {
    pub fn new(ctx: &'c RoundContext) -> Self {
        Vm {
            ctx,
            path: AlignmentPath::root(),
            frames: vec![BTreeMap::new()],
            export: Export::new(),
            state: LocalState::new(),
        }
    }

    pub fn self_id(&self) -> DeviceId {
        self.ctx.self_id()
    }

    pub fn context(&self) -> &'c RoundContext {
        self.ctx
    }

    pub fn path(&self) -> &AlignmentPath {
        &self.path
    }

    fn next_site(&mut self, tag: &'static str) -> AlignmentPath {
        let frame = self.frames.last_mut().expect("root frame");
        let occurrence = frame.entry(tag).or_insert(0);
        let token = Token::site(tag, *occurrence);
        *occurrence += 1;
        self.path.child(token)
    }

    fn enter<R>(&mut self, path: AlignmentPath, f: impl FnOnce(&mut Self) -> R) -> R {
        let saved = std::mem::replace(&mut self.path, path);
        self.frames.push(BTreeMap::new());
        let r = f(self);
        self.frames.pop();
        self.path = saved;
        r
    }

    /// Function-call alignment: evaluates `f` in a fresh sub-scope.
    pub fn scope<R>(&mut self, tag: &'static str, f: impl FnOnce(&mut Self) -> R) -> R {
        let path = self.next_site(tag);
        self.enter(path, f)
    }

    /// Evaluates `f` under an explicit token (used for process keys).
    pub fn scope_token<R>(&mut self, token: Token, f: impl FnOnce(&mut Self) -> R) -> R {
        let path = self.path.child(token);
        self.enter(path, f)
    }

    /// Conditional with branch alignment: only devices taking the same
    /// branch share the data produced inside it.
    pub fn branch<R>(
        &mut self,
        cond: bool,
        when_true: impl FnOnce(&mut Self) -> R,
        when_false: impl FnOnce(&mut Self) -> R,
    ) -> R {
        self.scope("if", |vm| {
            vm.scope_token(
                Token::Branch(cond),
                |vm| {
                    if cond {
                        when_true(vm)
                    } else {
                        when_false(vm)
                    }
                },
            )
        })
    }

    /// The `exchange` primitive. `body` receives the gathered nvalue and
    /// returns `(ret, send)`.
    pub fn exchange<F>(&mut self, tag: &'static str, init: NValue, body: F) -> Result<NValue, XcError>
    where
        F: FnOnce(&mut Self, NValue) -> Result<(NValue, NValue), XcError>,
    {
        let path = self.next_site(tag);
        if self.export.contains(&path) {
            return Err(XcError::DuplicatePath(path.to_string()));
        }
        let w = self.ctx.gather(&path, &init);
        let (ret, send) = self.enter(path.clone(), |vm| body(vm, w))?;
        self.export.insert(path, send)?;
        Ok(ret)
    }

    pub fn nfold<F>(&self, f: F, w: &NValue, local: &Literal) -> Result<Literal, XcError>
    where
        F: Fn(&Literal, &Literal) -> Result<Literal, XcError>,
    {
        nfold(f, w, local, self.self_id())
    }

    /// Device-local state carried to the next round without broadcasting it.
    pub fn rep(&mut self, tag: &'static str, init: Literal, f: impl FnOnce(Literal) -> Literal) -> Literal {
        let path = self.next_site(tag);
        let prev = self.ctx.prev_state().get(&path).cloned().unwrap_or(init);
        let next = f(prev);
        self.state.insert(path, next.clone());
        next
    }

    /// Records an export entry at an explicit path (bypassing occurrence counting).
    pub fn put_export_at(&mut self, path: AlignmentPath, value: NValue) -> Result<(), XcError> {
        self.export.insert(path, value)
    }

    pub fn put_state_at(&mut self, path: AlignmentPath, value: Literal) {
        self.state.insert(path, value);
    }

    pub fn finish(self) -> (Export, LocalState) {
        (self.export, self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xc_core::retsend;

    #[test]
    fn sequential_calls_get_distinct_paths() {
        let ctx = RoundContext::first(DeviceId(0));
        let mut vm = Vm::new(&ctx);
        vm.exchange("x", NValue::local(Literal::Int(0)), |_, w| Ok(retsend(w)))
            .unwrap();
        vm.exchange("x", NValue::local(Literal::Int(0)), |_, w| Ok(retsend(w)))
            .unwrap();
        let (export, _) = vm.finish();
        assert_eq!(export.len(), 2);
    }

    #[test]
    fn branches_do_not_align() {
        let ctx = RoundContext::first(DeviceId(0));
        let mut a = Vm::new(&ctx);
        a.branch(
            true,
            |vm| vm.exchange("x", Literal::Int(1).into(), |_, w| Ok(retsend(w))),
            |vm| vm.exchange("x", Literal::Int(2).into(), |_, w| Ok(retsend(w))),
        )
        .unwrap();
        let mut b = Vm::new(&ctx);
        b.branch(
            false,
            |vm| vm.exchange("x", Literal::Int(1).into(), |_, w| Ok(retsend(w))),
            |vm| vm.exchange("x", Literal::Int(2).into(), |_, w| Ok(retsend(w))),
        )
        .unwrap();
        let (ea, _) = a.finish();
        let (eb, _) = b.finish();
        let pa: Vec<_> = ea.iter().map(|(p, _)| p.clone()).collect();
        let pb: Vec<_> = eb.iter().map(|(p, _)| p.clone()).collect();
        assert_ne!(pa, pb);
    }

    #[test]
    fn rep_carries_state() {
        let ctx = RoundContext::first(DeviceId(3));
        let mut vm = Vm::new(&ctx);
        let v = vm.rep("count", Literal::Int(0), |l| l.try_add(&Literal::Int(1)).unwrap());
        assert_eq!(v, Literal::Int(1));
        let (export, state) = vm.finish();
        assert!(export.is_empty());

        let ctx = RoundContext::new(DeviceId(3), export, state);
        let mut vm = Vm::new(&ctx);
        let v = vm.rep("count", Literal::Int(0), |l| l.try_add(&Literal::Int(1)).unwrap());
        assert_eq!(v, Literal::Int(2));
    }
}
