"""Find a small set of rules to put behind user confirmation."""

from chaincheck import apply_watchlist, mitigate, run_check
from chaincheck.fixtures import overlapping_chains, smart_home
from chaincheck.mitigation import exact_hitting_set

home = smart_home()
wl = mitigate(home)
print(wl.to_text())
print("re-check with the watchlist gated:", run_check(apply_watchlist(home, wl)).verdict)

# Three attack chains on one alarm; two of them share rule C.
print()
model = overlapping_chains()
wl = mitigate(model)
print(wl.to_text())
sets = [a.rules for a in wl.attacks]
print("smallest possible watchlist:", exact_hitting_set(sets))
