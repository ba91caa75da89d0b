window.trb = { loaded: Date.now() };
