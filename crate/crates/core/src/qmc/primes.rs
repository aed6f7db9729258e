use std::sync::OnceLock;

/// Number of primes in the table; Halton supports this many dimensions.
pub const MAX_TABULATED_PRIMES: usize = 1000;

// The 1000th prime is 7919.
const SIEVE_LIMIT: usize = 7920;

fn table() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let mut composite = vec![false; SIEVE_LIMIT + 1];
        let mut primes = Vec::with_capacity(MAX_TABULATED_PRIMES);
        for i in 2..=SIEVE_LIMIT {
            if !composite[i] {
                primes.push(i as u64);
                let mut j = i * i;
                while j <= SIEVE_LIMIT {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        primes.truncate(MAX_TABULATED_PRIMES);
        primes
    })
}

/// Zero-based: `nth_prime(0) == 2`.
pub fn nth_prime(index: usize) -> Option<u64> {
    table().get(index).copied()
}

pub fn smallest_prime_at_least(k: u64) -> u64 {
    let mut p = k.max(2);
    loop {
        if (2..).take_while(|d| d * d <= p).all(|d| p % d != 0) {
            return p;
        }
        p += 1;
    }
}
