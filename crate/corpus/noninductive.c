/*@ requires 0 <= n <= 4; */
int noninductive(int n, int k) {
    int t = 0;
    int i = 0;
    while (i < n) {
        t = k * 2;
        i = i + 1;
    }
    /*@ assert n > 0 ==> t == 2 * k; */
    return t;
}
