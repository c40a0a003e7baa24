import { defineConfig } from "vitest/config";

export default defineConfig({
    test: {
        include: ["test/**/*.test.ts"],
        // tests spawn real server processes; keep files sequential
        fileParallelism: false,
        testTimeout: 120_000,
        hookTimeout: 120_000,
    },
});
