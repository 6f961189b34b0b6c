/** Small deterministic PRNG (mulberry32) with gaussian and shuffle helpers. */

export class Rng {
    private state: number;
    private spare: number | null = null;

    constructor(seed: number) {
        this.state = (seed >>> 0) + 0x9e3779b9;
    }

    /** uniform in [0, 1) */
    next(): number {
        this.state = (this.state + 0x6d2b79f5) >>> 0;
        let z = this.state;
        z = Math.imul(z ^ (z >>> 15), z | 1);
        z ^= z + Math.imul(z ^ (z >>> 7), z | 61);
        return ((z ^ (z >>> 14)) >>> 0) / 4294967296;
    }

    /** uniform integer in [lo, hi] inclusive */
    int(lo: number, hi: number): number {
        return lo + Math.floor(this.next() * (hi - lo + 1));
    }

    /** standard normal via Box-Muller */
    normal(): number {
        if (this.spare !== null) {
            const v = this.spare;
            this.spare = null;
            return v;
        }
        let u = 0;
        while (u === 0) u = this.next();
        const r = Math.sqrt(-2 * Math.log(u));
        const theta = 2 * Math.PI * this.next();
        this.spare = r * Math.sin(theta);
        return r * Math.cos(theta);
    }

    permutation(n: number): number[] {
        const order = Array.from({ length: n }, (_, i) => i);
        for (let i = n - 1; i > 0; i--) {
            const j = this.int(0, i);
            [order[i], order[j]] = [order[j], order[i]];
        }
        return order;
    }
}
