"""
How much does the last token know about earlier tokens?
=======================================================

II from the last kept token to the token tau positions before it.  Only
samples long enough for a given tau take part; offsets with fewer than
three such samples are skipped with a warning.
"""
import warnings

from infoimbalance.pipeline import tau_table, token_tau_profile
from infoimbalance.synthstore import make_token_store

# i.i.d. token vectors: no token says anything about another
iid = make_token_store(400, n_layers=1, dim=8, min_tokens=10, max_tokens=30)
# one vector repeated over every token: perfectly predictable
rep = make_token_store(400, n_layers=1, dim=8, min_tokens=10, max_tokens=30, repeat=True)

with warnings.catch_warnings(record=True) as caught:
    warnings.simplefilter("always")
    for name, store in (("iid", iid), ("repeated", rep)):
        profiles = token_tau_profile(store, layers=[1], taus=[1, 2, 4, 8, 16, 64])
        for row in tau_table(profiles).rows:
            print(f"{name:>8} tau={row['tau']:<3} II={row['value']:.3f}  N={row['n_contributing']}")
print(len(caught), "offsets skipped:", caught[0].message if caught else "")
