/*@ requires 0 <= n <= 4; */
int two_counters(int n) {
    int i = 0;
    int j = 0;
    while (i < n) {
        i = i + 1;
        j = j + 1;
    }
    /*@ assert j == n; */
    return j;
}
