import { defineConfig } from 'vitest/config';

export default defineConfig({
    test: {
        include: ['test/**/*.test.ts'],
        testTimeout: 300_000,
        hookTimeout: 300_000,
        // spawning the backend CLI from parallel workers thrashes the sandbox
        pool: 'forks',
        maxWorkers: 1,
        minWorkers: 1,
    },
});
