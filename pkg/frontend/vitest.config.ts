import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    testTimeout: 60000,
    hookTimeout: 60000,
    // The e2e suites spawn real services on real sockets; keep them serial.
    pool: "forks",
    maxConcurrency: 1,
    fileParallelism: false,
  },
});
