/*@ requires 0 <= n <= 4; */
int sequential_loops(int n) {
    int i = 0;
    int a = 0;
    while (i < n) {
        a = a + 1;
        i = i + 1;
    }
    int j = 0;
    int b = 0;
    while (j < a) {
        b = b + 2;
        j = j + 1;
    }
    /*@ assert b == 2 * n; */
    return b;
}
