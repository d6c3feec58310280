import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // every assertion round-trips through a spawned core process
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
